#include <bit>
#include <cstring>

#include "shadowstorm/error.hpp"
#include "shadowstorm/models.hpp"
#include "shadowstorm/pnm.hpp"

namespace shadowstorm {
namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'S', 'P', 'M'};

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }

  std::vector<std::uint8_t> bytes;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const std::string& what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(const std::string& what) { return get(8, what); }
  double f64(const std::string& what) { return std::bit_cast<double>(get(8, what)); }
  std::string str(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) throw ParseError("truncated parameter file while reading " + what, pos_);
  }
  std::uint64_t get(int n, const std::string& what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_params(const ModelParams& params) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kParamsVersion);
  w.u64(params.size());
  for (const auto& [name, t] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.u64(static_cast<std::uint64_t>(d));
    for (double v : t.data) w.f64(v);
  }
  return std::move(w.bytes);
}

ModelParams decode_params(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("bad magic: not a parameter file", 0);
  }
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32("version");
  if (version != kParamsVersion) {
    throw ParseError("parameter file version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kParamsVersion) + ")",
                     4);
  }
  const std::uint64_t count = r.u64("tensor count");
  ModelParams params;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string label = "tensor #" + std::to_string(i);
    const std::uint32_t name_len = r.u32(label + " name length");
    const std::string name = r.str(name_len, label + " name");
    const std::uint32_t rank = r.u32("rank of tensor " + name);
    std::vector<int> shape;
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = r.u64("shape of tensor " + name);
      if (dim == 0 || dim > (1u << 30)) throw ParseError("invalid dimension in tensor " + name, r.pos() + 4);
      shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    if (n > r.remaining() / 8) throw ParseError("truncated parameter file in payload of tensor " + name, r.pos() + 4);
    std::vector<double> data(n);
    for (double& v : data) v = r.f64("payload of tensor " + name);
    if (!params.emplace(name, ad::Tensor(std::move(shape), std::move(data))).second) {
      throw ParseError("duplicate tensor " + name, r.pos() + 4);
    }
  }
  return params;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  write_file(path, encode_params(params));
}

ModelParams load_params(const std::filesystem::path& path) {
  try {
    return decode_params(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace shadowstorm
