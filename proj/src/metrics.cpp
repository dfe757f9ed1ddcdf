#include "shadowstorm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shadowstorm/error.hpp"

namespace shadowstorm {
namespace {

void check_pair(const Image& x, const Image& y) {
  if (x.shape() != y.shape()) throw ShapeError("image shapes differ: " + x.shape().str() + " vs " + y.shape().str());
}

// Returns true when pixel p (row-major index) belongs to the region.
class RegionSelector {
 public:
  RegionSelector(const ShadowMask* mask, Region region, const Shape& shape) : mask_(mask), region_(region) {
    if (region == Region::all) return;
    if (!mask) throw UsageError("region " + to_string(region) + " requires a shadow mask");
    if (!mask->matches(shape)) {
      throw ShapeError("mask " + std::to_string(mask->height()) + "x" + std::to_string(mask->width()) +
                       " does not match image " + shape.str());
    }
    const std::size_t shadow = mask->shadow_count();
    if (shadow == 0 || shadow == mask->size()) {
      throw UsageError("region metrics need both shadow and non-shadow pixels in the mask");
    }
  }

  bool operator()(std::size_t pixel) const {
    switch (region_) {
      case Region::all:
        return true;
      case Region::shadow:
        return (*mask_)[pixel] == 1;
      case Region::nonshadow:
        return (*mask_)[pixel] == 0;
    }
    return false;
  }

 private:
  const ShadowMask* mask_;
  Region region_;
};

std::vector<double> gaussian_window() {
  const int r = kSsimWindow / 2;
  std::vector<double> w(static_cast<std::size_t>(kSsimWindow) * kSsimWindow);
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
      w[static_cast<std::size_t>(dy + r) * kSsimWindow + (dx + r)] = v;
      total += v;
    }
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

std::string to_string(Region region) {
  switch (region) {
    case Region::all:
      return "all";
    case Region::shadow:
      return "shadow";
    case Region::nonshadow:
      return "nonshadow";
  }
  return "?";
}

RegionError region_error(const Image& x, const Image& y, const ShadowMask* mask, Region region) {
  check_pair(x, y);
  const RegionSelector selected(mask, region, x.shape());
  const auto c = static_cast<std::size_t>(x.channels());
  RegionError err;
  for (std::size_t p = 0; p < x.shape().pixels(); ++p) {
    if (!selected(p)) continue;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double d = x[p * c + ch] - y[p * c + ch];
      err.sum_sq += d * d;
    }
    err.count += c;
  }
  if (err.count == 0) throw UsageError("region " + to_string(region) + " selects no pixels");
  return err;
}

double psnr(const Image& x, const Image& y, const ShadowMask* mask, Region region) {
  const RegionError err = region_error(x, y, mask, region);
  if (err.sum_sq == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / err.mse());
}

std::vector<double> ssim_map(const Image& x, const Image& y) {
  check_pair(x, y);
  const Shape& s = x.shape();
  if (s.height < kSsimWindow || s.width < kSsimWindow) {
    throw UsageError("SSIM needs images of at least " + std::to_string(kSsimWindow) + "x" +
                     std::to_string(kSsimWindow) + ", got " + s.str());
  }
  static const std::vector<double> window = gaussian_window();
  const double c1 = kSsimK1 * kSsimK1;
  const double c2 = kSsimK2 * kSsimK2;
  const int mh = s.height - kSsimWindow + 1;
  const int mw = s.width - kSsimWindow + 1;
  std::vector<double> out(static_cast<std::size_t>(mh) * mw * s.channels);
  for (int i = 0; i < mh; ++i) {
    for (int j = 0; j < mw; ++j) {
      for (int ch = 0; ch < s.channels; ++ch) {
        double mx = 0.0, my = 0.0, exx = 0.0, eyy = 0.0, exy = 0.0;
        for (int dy = 0; dy < kSsimWindow; ++dy) {
          for (int dx = 0; dx < kSsimWindow; ++dx) {
            const double w = window[static_cast<std::size_t>(dy) * kSsimWindow + dx];
            const double a = x.at(i + dy, j + dx, ch);
            const double b = y.at(i + dy, j + dx, ch);
            mx += w * a;
            my += w * b;
            exx += w * (a * a);
            eyy += w * (b * b);
            exy += w * (a * b);
          }
        }
        const double vx = exx - mx * mx;
        const double vy = eyy - my * my;
        const double cxy = exy - mx * my;
        out[(static_cast<std::size_t>(i) * mw + j) * s.channels + ch] =
            ((2.0 * (mx * my) + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
  }
  return out;
}

double ssim(const Image& x, const Image& y, const ShadowMask* mask, Region region) {
  check_pair(x, y);
  const RegionSelector selected(mask, region, x.shape());
  const std::vector<double> map = ssim_map(x, y);
  const Shape& s = x.shape();
  const int r = kSsimWindow / 2;
  const int mh = s.height - kSsimWindow + 1;
  const int mw = s.width - kSsimWindow + 1;
  double acc = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < mh; ++i) {
    for (int j = 0; j < mw; ++j) {
      const std::size_t centre = static_cast<std::size_t>(i + r) * s.width + (j + r);
      if (!selected(centre)) continue;
      for (int ch = 0; ch < s.channels; ++ch) acc += map[(static_cast<std::size_t>(i) * mw + j) * s.channels + ch];
      count += static_cast<std::size_t>(s.channels);
    }
  }
  if (count == 0) throw UsageError("SSIM region " + to_string(region) + " has no window centres");
  return acc / static_cast<double>(count);
}

PerturbationNorms perturbation_norms(std::span<const double> delta, const Image& image, double floor) {
  if (delta.size() != image.size()) throw ShapeError("perturbation does not match image " + image.shape().str());
  PerturbationNorms n;
  double l1 = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double a = std::fabs(delta[i]);
    l1 += a;
    n.linf = std::max(n.linf, a);
    n.linf_normalized = std::max(n.linf_normalized, a / std::max(image[i], floor));
  }
  n.l1_mean = l1 / static_cast<double>(delta.size());
  return n;
}

std::vector<double> normalized_perturbation_map(std::span<const double> delta, const Image& image, double floor) {
  if (delta.size() != image.size()) throw ShapeError("perturbation does not match image " + image.shape().str());
  std::vector<double> out(delta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(delta[i]) / std::max(image[i], floor);
  return out;
}

double region_mean(std::span<const double> field, const Shape& shape, const ShadowMask* mask, Region region) {
  if (field.size() != shape.size()) throw ShapeError("field does not match shape " + shape.str());
  const RegionSelector selected(mask, region, shape);
  const auto c = static_cast<std::size_t>(shape.channels);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    if (!selected(p)) continue;
    for (std::size_t ch = 0; ch < c; ++ch) acc += field[p * c + ch];
    count += c;
  }
  return acc / static_cast<double>(count);
}

ShadowMask dilate_mask(const ShadowMask& mask, int radius) {
  if (radius < 0) throw UsageError("dilation radius must be non-negative");
  if (radius == 0) return mask;
  const int h = mask.height(), w = mask.width();
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius); ++yy) {
        for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx) {
          out[static_cast<std::size_t>(yy) * w + xx] = 1;
        }
      }
    }
  }
  return ShadowMask(h, w, std::move(out));
}

MetricReport region_metrics(const Image& x, const Image& y, const ShadowMask& mask) {
  MetricReport r;
  r.psnr_all = psnr(x, y, &mask, Region::all);
  r.psnr_shadow = psnr(x, y, &mask, Region::shadow);
  r.psnr_nonshadow = psnr(x, y, &mask, Region::nonshadow);
  r.ssim_all = ssim(x, y, &mask, Region::all);
  r.ssim_shadow = ssim(x, y, &mask, Region::shadow);
  r.ssim_nonshadow = ssim(x, y, &mask, Region::nonshadow);
  return r;
}

}  // namespace shadowstorm
