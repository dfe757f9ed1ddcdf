#include "shadowstorm/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "shadowstorm/error.hpp"
#include "shadowstorm/numeric.hpp"

namespace shadowstorm {

std::string to_string(AttackMode mode) { return mode == AttackMode::uniform ? "uniform" : "adaptive"; }

AttackMode parse_attack_mode(const std::string& text) {
  if (text == "uniform") return AttackMode::uniform;
  if (text == "adaptive") return AttackMode::adaptive;
  throw UsageError("unknown attack mode '" + text + "' (expected uniform or adaptive)");
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw UsageError("epsilon must lie in (0, 1), got " + std::to_string(epsilon));
  if (iterations < 1) throw UsageError("iterations must be at least 1");
  if (!(step_divisor > 0.0)) throw UsageError("step divisor must be positive");
  if (!(intensity_floor > 0.0 && intensity_floor <= 1.0)) throw UsageError("intensity floor must lie in (0, 1]");
}

bool BudgetBox::degenerate() const {
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (upper[i] - lower[i] > 0.0) return false;
  }
  return true;
}

bool BudgetBox::contains(std::span<const double> delta, double tol) const {
  if (delta.size() != lower.size()) return false;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (!(delta[i] >= lower[i] - tol && delta[i] <= upper[i] + tol)) return false;
  }
  return true;
}

std::vector<double> effective_intensity(const Image& image, double floor) {
  std::vector<double> out(image.data().begin(), image.data().end());
  for (double& v : out) v = std::max(v, floor);
  return out;
}

BudgetBox budget_box(const Image& image, const AttackConfig& config) {
  config.validate();
  BudgetBox box{image.shape(), std::vector<double>(image.size()), std::vector<double>(image.size())};
  const double eps = config.epsilon;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = image[i];
    const double radius = config.mode == AttackMode::uniform ? eps : eps * std::max(v, config.intensity_floor);
    box.lower[i] = std::max(-radius, -v);
    box.upper[i] = std::min(radius, 1.0 - v);
  }
  return box;
}

Perturbation init_delta(const BudgetBox& box, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  Perturbation delta = Perturbation::zeros(box.shape);
  for (std::size_t i = 0; i < delta.data.size(); ++i) {
    const double u = rng.uniform();
    delta.data[i] = std::clamp(box.lower[i] + u * (box.upper[i] - box.lower[i]), box.lower[i], box.upper[i]);
  }
  return delta;
}

std::vector<double> step_sizes(const Image& image, const AttackConfig& config) {
  const double base = config.epsilon / config.step_divisor;
  std::vector<double> steps(image.size(), base);
  if (config.mode == AttackMode::adaptive && config.step_rule == StepRule::per_pixel) {
    for (std::size_t i = 0; i < steps.size(); ++i) steps[i] = base * std::max(image[i], config.intensity_floor);
  }
  return steps;
}

Image apply_perturbation(const Image& image, std::span<const double> delta) {
  if (delta.size() != image.size()) throw ShapeError("perturbation does not match image " + image.shape().str());
  std::vector<double> out(image.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(image[i] + delta[i], 0.0, 1.0);
  return Image(image.shape(), std::move(out));
}

AttackResult pgd_attack(const DiffModel& model, const Image& image, const AttackConfig& config,
                        const IterationObserver& observer) {
  config.validate();
  const BudgetBox box = budget_box(image, config);
  const std::vector<double> steps = step_sizes(image, config);
  const Image anchor = model.forward(image);
  if (anchor.shape() != image.shape()) throw ShapeError("model " + model.name() + " changed the image shape");

  Perturbation delta = init_delta(box, config.seed);
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(config.iterations));

  for (int t = 0; t < config.iterations; ++t) {
    double objective = 0.0;
    const CotangentFn cotangent = [&](const Image& output) {
      // d||y - anchor|| / dy = (y - anchor) / ||y - anchor||, taken as zero at the origin.
      std::vector<double> diff(output.size());
      double sq = 0.0;
      for (std::size_t i = 0; i < diff.size(); ++i) {
        diff[i] = output[i] - anchor[i];
        sq += diff[i] * diff[i];
      }
      objective = std::sqrt(sq);
      if (objective > 0.0) {
        for (double& d : diff) d /= objective;
      } else {
        std::fill(diff.begin(), diff.end(), 0.0);
      }
      return diff;
    };
    const VjpResult vjp = model.forward_with_vjp(apply_perturbation(image, delta.data), cotangent);
    if (!std::isfinite(objective)) {
      throw NumericError("non-finite objective at iteration " + std::to_string(t) + " of " + model.name());
    }
    for (std::size_t i = 0; i < vjp.input_grad.size(); ++i) {
      const double g = vjp.input_grad[i];
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient at iteration " + std::to_string(t) + ", coordinate " +
                           std::to_string(i) + " of " + model.name());
      }
      const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
      delta.data[i] = std::clamp(delta.data[i] + steps[i] * sign, box.lower[i], box.upper[i]);
    }
    trace.push_back(objective);
    if (observer) observer(t, delta.data);
  }

  Image attacked = apply_perturbation(image, delta.data);
  return AttackResult{std::move(delta), std::move(attacked), std::move(trace), config};
}

double equivalent_uniform_budget(const Image& image, double epsilon_a) {
  if (!(epsilon_a > 0.0 && epsilon_a < 1.0)) throw UsageError("epsilon_a must lie in (0, 1)");
  return epsilon_a * mean_intensity(image);
}

std::string L1BoundReport::summary() const {
  char buf[256];
  if (violating_index) {
    std::snprintf(buf, sizeof buf, "mean|delta|=%.12g bound=%.12g; coordinate %zu exceeds its budget by %.3e",
                  mean_abs, bound, *violating_index, violation);
  } else {
    std::snprintf(buf, sizeof buf, "mean|delta|=%.12g bound=%.12g %s", mean_abs, bound, holds ? "holds" : "violated");
  }
  return buf;
}

L1BoundReport verify_l1_bound(const Perturbation& delta, const Image& image, double epsilon_a, double floor,
                              double tol) {
  if (delta.data.size() != image.size() || delta.shape != image.shape()) {
    throw ShapeError("perturbation " + delta.shape.str() + " does not match image " + image.shape().str());
  }
  const std::vector<double> ieff = effective_intensity(image, floor);
  std::vector<double> abs_delta(delta.data.size());
  L1BoundReport report;
  for (std::size_t i = 0; i < abs_delta.size(); ++i) {
    abs_delta[i] = std::fabs(delta.data[i]);
    const double excess = abs_delta[i] - epsilon_a * ieff[i];
    if (excess > tol && !report.violating_index) {
      report.violating_index = i;
      report.violation = excess;
    }
  }
  const double n = static_cast<double>(abs_delta.size());
  report.mean_abs = exact_sum(abs_delta) / n;
  report.bound = epsilon_a * (exact_sum(ieff) / n);
  report.holds = !report.violating_index && report.mean_abs <= report.bound + tol;
  return report;
}

}  // namespace shadowstorm
