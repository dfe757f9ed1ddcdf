#include "shadowstorm/pnm.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "shadowstorm/error.hpp"

namespace shadowstorm {
namespace {

struct Header {
  int channels = 0;
  int width = 0;
  int height = 0;
  std::size_t payload_offset = 0;
};

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  long number(const char* field) {
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) throw ParseError(std::string("malformed header: ") + field + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("malformed header: expected ") + field, start);
    return value;
  }

  Header parse() {
    Header h;
    if (bytes_.size() < 2 || bytes_[0] != 'P' || (bytes_[1] != '5' && bytes_[1] != '6')) {
      throw ParseError("malformed header: expected magic P5 or P6", 0);
    }
    h.channels = bytes_[1] == '5' ? 1 : 3;
    pos_ = 2;
    require_separator();
    h.width = static_cast<int>(positive("width"));
    require_separator();
    h.height = static_cast<int>(positive("height"));
    require_separator();
    const std::size_t maxval_offset = pos_;
    const long maxval = number("maxval");
    if (maxval != 255) {
      throw ParseError("unsupported maxval " + std::to_string(maxval) + " (only 255 is accepted)", maxval_offset);
    }
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
      throw ParseError("malformed header: expected single whitespace byte after maxval", pos_);
    }
    h.payload_offset = pos_ + 1;
    return h;
  }

 private:
  void require_separator() {
    if (pos_ >= bytes_.size() || (!is_space(bytes_[pos_]) && bytes_[pos_] != '#')) {
      throw ParseError("malformed header: expected whitespace", pos_);
    }
    skip_space_and_comments();
  }

  long positive(const char* field) {
    const std::size_t start = pos_;
    const long v = number(field);
    if (v <= 0) throw ParseError(std::string("malformed header: ") + field + " must be positive", start);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Header parse_checked(std::span<const std::uint8_t> bytes) {
  Header h = HeaderReader(bytes).parse();
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height * h.channels;
  const std::size_t have = bytes.size() - h.payload_offset;
  if (have < need) {
    throw ParseError("truncated payload: expected " + std::to_string(need) + " bytes, found " + std::to_string(have),
                     bytes.size());
  }
  return h;
}

std::vector<std::uint8_t> header_bytes(char magic, int width, int height) {
  const std::string header = std::string("P") + magic + "\n" + std::to_string(width) + " " + std::to_string(height) +
                             "\n255\n";
  return {header.begin(), header.end()};
}

}  // namespace

std::uint8_t quantize(double v) {
  // lround rounds halfway cases away from zero.
  const long q = std::lround(v * 255.0);
  return static_cast<std::uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on " + path.string());
}

Image decode_pnm(std::span<const std::uint8_t> bytes) {
  const Header h = parse_checked(bytes);
  const Shape shape{h.height, h.width, h.channels};
  std::vector<double> data(shape.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = bytes[h.payload_offset + i] / 255.0;
  return Image(shape, std::move(data));
}

Image load_pnm(const std::filesystem::path& path) {
  try {
    return decode_pnm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

std::vector<std::uint8_t> encode_pnm(const Image& image) {
  std::vector<std::uint8_t> bytes = header_bytes(image.channels() == 1 ? '5' : '6', image.width(), image.height());
  bytes.reserve(bytes.size() + image.size());
  for (double v : image.data()) bytes.push_back(quantize(v));
  return bytes;
}

void save_pnm(const Image& image, const std::filesystem::path& path) { write_file(path, encode_pnm(image)); }

ShadowMask decode_mask(std::span<const std::uint8_t> bytes, double threshold) {
  const Header h = parse_checked(bytes);
  if (h.channels != 1) throw ParseError("mask must be single-channel", 0);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(h.width) * h.height);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = bytes[h.payload_offset + i] / 255.0 > threshold ? 1 : 0;
  }
  return ShadowMask(h.height, h.width, std::move(data));
}

ShadowMask load_mask(const std::filesystem::path& path, double threshold) {
  try {
    return decode_mask(read_file(path), threshold);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

void save_mask(const ShadowMask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes = header_bytes('5', mask.width(), mask.height());
  for (std::uint8_t v : mask.data()) bytes.push_back(v ? 255 : 0);
  write_file(path, bytes);
}

}  // namespace shadowstorm
