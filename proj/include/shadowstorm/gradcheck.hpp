#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shadowstorm/autodiff.hpp"

namespace shadowstorm::ad {

struct GradCheckOptions {
  double h = 1e-4;
  double tol = 1e-4;
  /// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, scale_floor).
  double scale_floor = 1e-3;
  /// Coordinates where central differences at h and h/2 disagree by more than
  /// `kink_tol` (relative) sit next to a kink (relu, clamp); finite differences are
  /// no oracle there, so they are counted and left out of the maximum. On smooth
  /// stretches the two estimates agree to roughly h^2.
  bool skip_nonsmooth = true;
  double kink_tol = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_nonsmooth = 0;
  bool passed = false;

  std::string summary() const;
};

using ScalarFn = std::function<double(std::span<const double>)>;
using VectorFn = std::function<std::vector<double>(std::span<const double>)>;
using TapeFn = std::function<Var(Tape&, Var)>;

/// Compares `analytic` against central differences of `f` around `x`.
GradCheckReport grad_check(const ScalarFn& f, std::span<const double> analytic, std::span<const double> x,
                           const GradCheckOptions& options = {});

/// Checks a vector-Jacobian product: `analytic` should equal J(x)^T `cotangent`.
/// Outputs are differenced before projecting onto `cotangent`, so a linear map
/// reproduces its gradient exactly.
GradCheckReport grad_check(const VectorFn& f, std::span<const double> cotangent, std::span<const double> analytic,
                           std::span<const double> x, const GradCheckOptions& options = {});

/// Runs `f` on a fresh tape, back-propagates, and checks the gradient at `x`.
GradCheckReport grad_check(const TapeFn& f, const Tensor& x, const GradCheckOptions& options = {});

}  // namespace shadowstorm::ad
