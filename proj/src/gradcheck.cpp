#include "shadowstorm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "shadowstorm/error.hpp"

namespace shadowstorm::ad {

std::string GradCheckReport::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "max_rel_error=%.3e at %zu (analytic %.9g, numeric %.9g), checked=%zu, skipped=%zu",
                max_rel_error, worst_index, worst_analytic, worst_numeric, checked, skipped_nonsmooth);
  return buf;
}

namespace {

// `central(i, h)` returns the central-difference derivative along coordinate i.
template <typename Central>
GradCheckReport check_all(std::size_t n, std::span<const double> analytic, const Central& central,
                          const GradCheckOptions& options) {
  GradCheckReport report;
  for (std::size_t i = 0; i < n; ++i) {
    const double numeric = central(i, options.h);
    if (options.skip_nonsmooth) {
      const double half = central(i, 0.5 * options.h);
      const double denom = std::max({std::fabs(numeric), std::fabs(half), options.scale_floor});
      if (std::fabs(numeric - half) / denom > options.kink_tol) {
        ++report.skipped_nonsmooth;
        continue;
      }
    }
    const double a = analytic[i];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), options.scale_floor});
    const double err = std::fabs(a - numeric) / denom;
    ++report.checked;
    if (!(err <= report.max_rel_error)) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.checked > 0 && report.max_rel_error < options.tol;
  return report;
}

void check_args(std::span<const double> analytic, std::span<const double> x, const GradCheckOptions& options) {
  if (!(options.h > 0.0)) throw UsageError("grad_check: step h must be positive");
  if (analytic.size() != x.size()) throw ShapeError("grad_check: gradient and point differ in length");
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, std::span<const double> analytic, std::span<const double> x,
                           const GradCheckOptions& options) {
  check_args(analytic, x, options);
  std::vector<double> probe(x.begin(), x.end());
  auto central = [&](std::size_t i, double h) {
    const double hi = x[i] + h, lo = x[i] - h;
    probe[i] = hi;
    const double up = f(probe);
    probe[i] = lo;
    const double down = f(probe);
    probe[i] = x[i];
    return (up - down) / (hi - lo);  // the step actually taken after rounding
  };
  return check_all(x.size(), analytic, central, options);
}

GradCheckReport grad_check(const VectorFn& f, std::span<const double> cotangent, std::span<const double> analytic,
                           std::span<const double> x, const GradCheckOptions& options) {
  check_args(analytic, x, options);
  std::vector<double> probe(x.begin(), x.end());
  auto central = [&](std::size_t i, double h) {
    const double hi = x[i] + h, lo = x[i] - h;
    probe[i] = hi;
    const std::vector<double> up = f(probe);
    probe[i] = lo;
    const std::vector<double> down = f(probe);
    probe[i] = x[i];
    if (up.size() != cotangent.size() || down.size() != cotangent.size()) {
      throw ShapeError("grad_check: output length differs from cotangent length");
    }
    // Differencing outputs before projecting keeps cancellation error per coordinate.
    const double step = hi - lo;
    double acc = 0.0;
    for (std::size_t j = 0; j < up.size(); ++j) {
      const double d = up[j] - down[j];
      if (d != 0.0) acc += cotangent[j] * (d / step);
    }
    return acc;
  };
  return check_all(x.size(), analytic, central, options);
}

GradCheckReport grad_check(const TapeFn& f, const Tensor& x, const GradCheckOptions& options) {
  std::vector<double> analytic;
  {
    Tape tape;
    Var in = tape.variable(x);
    Var loss = f(tape, in);
    tape.backward(loss);
    const auto g = in.grad();
    analytic.assign(g.begin(), g.end());
  }
  const ScalarFn value = [&](std::span<const double> point) {
    Tape tape;
    Var in = tape.constant(Tensor(x.shape, std::vector<double>(point.begin(), point.end())));
    Var out = f(tape, in);
    if (out.value().size() != 1) throw ShapeError("grad_check: function must return a scalar");
    return out.value().data[0];
  };
  return grad_check(value, analytic, x.data, options);
}

}  // namespace shadowstorm::ad
