#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "shadowstorm/image.hpp"

namespace shadowstorm {

enum class Region { all, shadow, nonshadow };

std::string to_string(Region region);

/// Squared-error sum and the number of values it covers.
struct RegionError {
  double sum_sq = 0.0;
  std::size_t count = 0;

  double mse() const { return sum_sq / static_cast<double>(count); }
};

/// Squared error of x - y over the pixels of `region` (all channels).
/// `mask` may be null only for Region::all.
RegionError region_error(const Image& x, const Image& y, const ShadowMask* mask, Region region);

/// 10 log10(1 / MSE) with peak 1; +infinity when the region matches exactly.
double psnr(const Image& x, const Image& y, const ShadowMask* mask = nullptr, Region region = Region::all);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Dense SSIM map over valid window positions, per channel: (H-10) x (W-10) x C.
std::vector<double> ssim_map(const Image& x, const Image& y);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5). Region membership of a
/// map entry follows the mask value at its window centre.
double ssim(const Image& x, const Image& y, const ShadowMask* mask = nullptr, Region region = Region::all);

struct PerturbationNorms {
  double l1_mean = 0.0;
  double linf = 0.0;
  double linf_normalized = 0.0;
};

PerturbationNorms perturbation_norms(std::span<const double> delta, const Image& image, double floor = 1.0 / 255.0);

/// |delta_i| / max(I_i, floor), unclamped.
std::vector<double> normalized_perturbation_map(std::span<const double> delta, const Image& image,
                                                double floor = 1.0 / 255.0);

/// Mean of a per-entry field (image layout) over the pixels of `region`.
double region_mean(std::span<const double> field, const Shape& shape, const ShadowMask* mask, Region region);

/// Grows the shadow class by `radius` pixels (square structuring element).
ShadowMask dilate_mask(const ShadowMask& mask, int radius);

struct MetricReport {
  double psnr_all = 0.0;
  double psnr_shadow = 0.0;
  double psnr_nonshadow = 0.0;
  double ssim_all = 0.0;
  double ssim_shadow = 0.0;
  double ssim_nonshadow = 0.0;
};

/// PSNR and SSIM of `x` against `y` on the whole image and each mask region.
MetricReport region_metrics(const Image& x, const Image& y, const ShadowMask& mask);

}  // namespace shadowstorm
