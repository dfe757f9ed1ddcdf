#include "shadowstorm/synthdata.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <regex>
#include <sstream>

#include "shadowstorm/autodiff.hpp"
#include "shadowstorm/error.hpp"
#include "shadowstorm/numeric.hpp"
#include "shadowstorm/pnm.hpp"

namespace shadowstorm {
namespace {

constexpr int kChannels = 3;
constexpr int kMaxMaskAttempts = 100;

enum Stream : std::uint64_t { kBaseStream = 1, kMaskStream = 2, kAttenuationStream = 3 };

constexpr double kPi = std::numbers::pi;

constexpr double kLevelMin = 0.45, kLevelMax = 0.7;
constexpr double kSpreadMin = 0.05, kSpreadMax = 0.15;

// Smooth procedural scene with values in [0.3, 0.85], inside [0.15, 0.95].
Image base_scene(const SynthConfig& c, Xoshiro256& rng) {
  const int h = c.height, w = c.width;
  std::vector<double> acc(static_cast<std::size_t>(h) * w * kChannels, 0.0);
  const int components = rng.uniform_int(2, 4);
  for (int n = 0; n < components; ++n) {
    const int kind = rng.uniform_int(0, 2);
    const double amp = rng.uniform(0.5, 1.0);
    double tint[kChannels];
    for (double& t : tint) t = rng.uniform(0.5, 1.0);
    const double p0 = rng.uniform(), p1 = rng.uniform(), p2 = rng.uniform(), p3 = rng.uniform();
    for (int y = 0; y < h; ++y) {
      const double v = (y + 0.5) / h;
      for (int x = 0; x < w; ++x) {
        const double u = (x + 0.5) / w;
        double value = 0.0;
        if (kind == 0) {
          const double theta = 2.0 * kPi * p0;
          value = u * std::cos(theta) + v * std::sin(theta);
        } else if (kind == 1) {
          const double fx = 0.5 + 1.5 * p0, fy = 0.5 + 1.5 * p1;
          value = std::sin(2.0 * kPi * (fx * u + fy * v) + 2.0 * kPi * p2);
        } else {
          const double s = 0.1 + 0.2 * p3;
          const double du = u - p0, dv = v - p1;
          value = std::exp(-(du * du + dv * dv) / (2.0 * s * s));
        }
        double* px = acc.data() + (static_cast<std::size_t>(y) * w + x) * kChannels;
        for (int ch = 0; ch < kChannels; ++ch) px[ch] += amp * tint[ch] * value;
      }
    }
  }
  // Min-max normalize, then place the scene at a random level with a moderate spread.
  // The extremes stay inside [0.15, 0.95].
  const double level = rng.uniform(kLevelMin, kLevelMax);
  const double spread = rng.uniform(kSpreadMin, kSpreadMax);
  const auto [lo_it, hi_it] = std::minmax_element(acc.begin(), acc.end());
  const double lo = *lo_it, hi = *hi_it;
  for (double& a : acc) a = hi > lo ? level + spread * (2.0 * (a - lo) / (hi - lo) - 1.0) : level;
  return Image::clamped(Shape{h, w, kChannels}, std::move(acc));
}

struct Point {
  double x, y;
};

std::vector<std::uint8_t> ellipse_mask(const SynthConfig& c, Xoshiro256& rng, double target) {
  const int h = c.height, w = c.width;
  const double aspect = rng.uniform(0.5, 2.0);
  const double a = std::sqrt(target * h * w / (kPi * aspect));
  const double b = a * aspect;
  const double phi = rng.uniform(0.0, kPi);
  const double cp = std::cos(phi), sp = std::sin(phi);
  const double ex = std::sqrt(a * a * cp * cp + b * b * sp * sp);
  const double ey = std::sqrt(a * a * sp * sp + b * b * cp * cp);
  const double cx = ex < w / 2.0 ? rng.uniform(ex, w - ex) : w / 2.0;
  const double cy = ey < h / 2.0 ? rng.uniform(ey, h - ey) : h / 2.0;
  std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double along = dx * cp + dy * sp;
      const double across = -dx * sp + dy * cp;
      if ((along * along) / (a * a) + (across * across) / (b * b) <= 1.0) m[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  return m;
}

std::vector<std::uint8_t> polygon_mask(const SynthConfig& c, Xoshiro256& rng, double target) {
  const int h = c.height, w = c.width;
  const int vertices = rng.uniform_int(5, 8);
  const double aspect = rng.uniform(0.6, 1.6);
  const double spacing = 2.0 * kPi / vertices;
  const double start = rng.uniform(0.0, 2.0 * kPi);
  // Points on a stretched circle at increasing angles form a convex polygon.
  std::vector<Point> unit(static_cast<std::size_t>(vertices));
  for (int k = 0; k < vertices; ++k) {
    const double angle = start + spacing * (k + rng.uniform(-0.3, 0.3));
    unit[static_cast<std::size_t>(k)] = {std::cos(angle) * aspect, std::sin(angle)};
  }
  double area = 0.0;
  for (int k = 0; k < vertices; ++k) {
    const Point& p = unit[static_cast<std::size_t>(k)];
    const Point& q = unit[static_cast<std::size_t>((k + 1) % vertices)];
    area += p.x * q.y - q.x * p.y;
  }
  area = std::fabs(area) / 2.0;
  const double scale = std::sqrt(target * h * w / area);
  double ex = 0.0, ey = 0.0;
  for (Point& p : unit) {
    p.x *= scale;
    p.y *= scale;
    ex = std::max(ex, std::fabs(p.x));
    ey = std::max(ey, std::fabs(p.y));
  }
  const double cx = ex < w / 2.0 ? rng.uniform(ex, w - ex) : w / 2.0;
  const double cy = ey < h / 2.0 ? rng.uniform(ey, h - ey) : h / 2.0;
  std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5 - cx, py = y + 0.5 - cy;
      bool inside = true;
      for (int k = 0; k < vertices && inside; ++k) {
        const Point& p = unit[static_cast<std::size_t>(k)];
        const Point& q = unit[static_cast<std::size_t>((k + 1) % vertices)];
        inside = (q.x - p.x) * (py - p.y) - (q.y - p.y) * (px - p.x) >= 0.0;
      }
      if (inside) m[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  return m;
}

double masked_mean(const Image& image, const ShadowMask& mask, std::uint8_t cls) {
  double acc = 0.0;
  std::size_t n = 0;
  const auto c = static_cast<std::size_t>(image.channels());
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (mask[p] != cls) continue;
    for (std::size_t ch = 0; ch < c; ++ch) acc += image[p * c + ch];
    n += c;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (count < 1) throw UsageError("count must be at least 1");
  if (height < 32 || width < 32) throw UsageError("synthetic images must be at least 32x32");
  if (!(k_min > 0.0 && k_min < k_max && k_max < 1.0)) {
    throw UsageError("attenuation range must satisfy 0 < k_min < k_max < 1");
  }
  if (!(area_min > 0.0 && area_min < area_max && area_max < 1.0)) {
    throw UsageError("mask area range must satisfy 0 < min < max < 1");
  }
  if (blur_radius < 0) throw UsageError("blur radius must be non-negative");
}

std::uint64_t triplet_seed(std::uint64_t seed, int index) {
  return derive_seed(seed, {static_cast<std::uint64_t>(index)});
}

std::vector<double> soften_mask(const ShadowMask& mask, int radius) {
  std::vector<double> hard(mask.data().begin(), mask.data().end());
  if (radius == 0) return hard;
  return ad::blur_values(hard, mask.height(), mask.width(), 1, ad::Kernel2D::box(radius));
}

Image attenuate(const Image& shadow_free, const std::vector<double>& soft_mask, double k) {
  const Shape& s = shadow_free.shape();
  if (soft_mask.size() != s.pixels()) throw ShapeError("soft mask does not match image " + s.str());
  std::vector<double> out(shadow_free.size());
  const auto c = static_cast<std::size_t>(s.channels);
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    const double factor = 1.0 - k * soft_mask[p];
    for (std::size_t ch = 0; ch < c; ++ch) out[p * c + ch] = shadow_free[p * c + ch] * factor;
  }
  return Image(s, std::move(out));
}

GeneratedTriplet gen_triplet(const SynthConfig& config, int index) {
  config.validate();
  if (index < 0 || index >= config.count) {
    throw UsageError("triplet index " + std::to_string(index) + " outside [0, " + std::to_string(config.count) + ")");
  }
  const std::uint64_t seed = triplet_seed(config.seed, index);
  Xoshiro256 base_rng(derive_seed(seed, {kBaseStream}));
  Xoshiro256 mask_rng(derive_seed(seed, {kMaskStream}));
  Xoshiro256 k_rng(derive_seed(seed, {kAttenuationStream}));

  Image free = base_scene(config, base_rng);
  const double k = config.k_min + (config.k_max - config.k_min) * k_rng.uniform();
  const double pixels = static_cast<double>(config.height) * config.width;

  for (int attempt = 0; attempt < kMaxMaskAttempts; ++attempt) {
    const double target = mask_rng.uniform(config.area_min, config.area_max);
    std::vector<std::uint8_t> bits =
        mask_rng.uniform() < 0.5 ? ellipse_mask(config, mask_rng, target) : polygon_mask(config, mask_rng, target);
    ShadowMask mask(config.height, config.width, std::move(bits));
    const double fraction = static_cast<double>(mask.shadow_count()) / pixels;
    if (fraction < config.area_min || fraction > config.area_max) continue;
    Image shadow = attenuate(free, soften_mask(mask, config.blur_radius), k);
    if (!(masked_mean(shadow, mask, 1) < masked_mean(shadow, mask, 0))) continue;
    return {Triplet{std::move(shadow), std::move(mask), std::move(free)}, TripletInfo{index, k, fraction, seed}};
  }
  throw UsageError("could not place a shadow mask for triplet " + std::to_string(index) + " after " +
                   std::to_string(kMaxMaskAttempts) + " attempts");
}

std::string triplet_file_name(const std::string& role, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d.%s", role.c_str(), index, role == "mask" ? "pgm" : "ppm");
  return buf;
}

std::vector<TripletInfo> gen_dataset(const SynthConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());

  std::vector<TripletInfo> rows;
  std::ostringstream manifest;
  manifest << "# shadowstorm-manifest v1 seed=" << config.seed << " count=" << config.count
           << " size=" << config.height << "x" << config.width << "\n";
  manifest << "index\tk\tarea_fraction\tseed\n";
  for (int i = 0; i < config.count; ++i) {
    const GeneratedTriplet g = gen_triplet(config, i);
    save_pnm(g.triplet.shadow, out_dir / triplet_file_name("shadow", i));
    save_mask(g.triplet.mask, out_dir / triplet_file_name("mask", i));
    save_pnm(g.triplet.shadow_free, out_dir / triplet_file_name("free", i));
    manifest << i << "\t" << format_g9(g.info.k) << "\t" << format_g9(g.info.area_fraction) << "\t" << g.info.seed
             << "\n";
    rows.push_back(g.info);
  }
  const std::string text = manifest.str();
  write_file(out_dir / kManifestName, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return rows;
}

std::vector<TripletInfo> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::vector<TripletInfo> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "index\tk\tarea_fraction\tseed") throw IoError("manifest " + path.string() + " has no column header");
      header_seen = true;
      continue;
    }
    std::istringstream fields(line);
    TripletInfo row;
    if (!(fields >> row.index >> row.k >> row.area_fraction >> row.seed)) {
      throw IoError("malformed manifest row: " + line);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<DatasetEntry> load_triplet_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("dataset directory " + dir.string() + " does not exist");

  static const std::regex pattern(R"(^(shadow|mask|free)_(\d{4,})\.(ppm|pgm)$)");
  std::map<int, std::map<std::string, std::filesystem::path>> members;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, pattern)) continue;
    members[std::stoi(m[2].str())][m[1].str()] = entry.path();
  }

  std::vector<DatasetEntry> out;
  for (const auto& [index, files] : members) {
    for (const char* role : {"shadow", "mask", "free"}) {
      if (!files.count(role)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "missing %s_%04d", role, index);
        throw IoError(std::string(buf) + " in " + dir.string());
      }
    }
    Image shadow = load_pnm(files.at("shadow"));
    ShadowMask mask = load_mask(files.at("mask"));
    Image free = load_pnm(files.at("free"));
    if (shadow.shape() != free.shape() || !mask.matches(shadow.shape())) {
      throw ShapeError("triplet " + std::to_string(index) + " has mismatched shapes: shadow " + shadow.shape().str() +
                       ", free " + free.shape().str() + ", mask " + std::to_string(mask.height()) + "x" +
                       std::to_string(mask.width()));
    }
    out.push_back(DatasetEntry{index, Triplet{std::move(shadow), std::move(mask), std::move(free)}});
  }
  return out;
}

}  // namespace shadowstorm
