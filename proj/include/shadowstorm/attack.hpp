#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shadowstorm/image.hpp"
#include "shadowstorm/models.hpp"

namespace shadowstorm {

enum class AttackMode { uniform, adaptive };

/// How the adaptive attack scales its step: per coordinate (epsilon * I_eff / divisor)
/// or one scalar step epsilon / divisor for every coordinate.
enum class StepRule { per_pixel, scalar };

std::string to_string(AttackMode mode);
AttackMode parse_attack_mode(const std::string& text);

struct AttackConfig {
  AttackMode mode = AttackMode::adaptive;
  /// epsilon_u in uniform mode, epsilon_a in adaptive mode.
  double epsilon = 8.0 / 255.0;
  int iterations = 20;
  double step_divisor = 4.0;
  std::uint64_t seed = 0;
  /// Lower bound on the intensity used by the adaptive budget.
  double intensity_floor = 1.0 / 255.0;
  StepRule step_rule = StepRule::per_pixel;

  /// Throws UsageError when a field is out of range.
  void validate() const;
};

/// Feasible perturbation set lower <= delta <= upper, coordinate-wise.
struct BudgetBox {
  Shape shape;
  std::vector<double> lower;
  std::vector<double> upper;

  /// True when no coordinate has room to move.
  bool degenerate() const;
  bool contains(std::span<const double> delta, double tol = 0.0) const;
};

struct AttackResult {
  Perturbation perturbation;
  Image attacked_image;
  /// Objective ||f(I) - f(I + delta)||_2 at the start of every iteration.
  std::vector<double> objective_trace;
  AttackConfig config;
};

/// Called after each projection with the iteration index and the current delta.
using IterationObserver = std::function<void(int iteration, std::span<const double> delta)>;

/// max(I, floor) per coordinate.
std::vector<double> effective_intensity(const Image& image, double floor);

/**
 * uniform:  [max(-eps, -I), min(eps, 1 - I)]
 * adaptive: [max(-eps * I_eff, -I), min(eps * I_eff, 1 - I)], I_eff = max(I, floor)
 */
BudgetBox budget_box(const Image& image, const AttackConfig& config);

/// Draws each coordinate uniformly from its box interval with xoshiro256** seeded by `seed`.
Perturbation init_delta(const BudgetBox& box, std::uint64_t seed);

/// Per-coordinate ascent step sizes for `config` on `image`.
std::vector<double> step_sizes(const Image& image, const AttackConfig& config);

/**
 * Projected sign-gradient ascent on ||f(I) - f(I + delta)||_2 with f(I)
 * held fixed. Each iteration takes delta += step * sgn(grad) (sgn(0) = 0)
 * and clips to the budget box. Throws NumericError on a non-finite gradient.
 */
AttackResult pgd_attack(const DiffModel& model, const Image& image, const AttackConfig& config,
                        const IterationObserver& observer = {});

/// I + delta, clamped into [0, 1] (a no-op for projected perturbations up to rounding).
Image apply_perturbation(const Image& image, std::span<const double> delta);

/// Uniform budget with the same maximal mean absolute perturbation: epsilon_a * mean(I).
double equivalent_uniform_budget(const Image& image, double epsilon_a);

struct L1BoundReport {
  /// (1/n) * sum |delta_i|
  double mean_abs = 0.0;
  /// epsilon_a * mean(I_eff)
  double bound = 0.0;
  /// First coordinate with |delta_i| > epsilon_a * I_eff,i + tolerance.
  std::optional<std::size_t> violating_index;
  double violation = 0.0;
  bool holds = false;

  std::string summary() const;
};

/// Checks the per-coordinate adaptive bound and the mean-L1 bound it implies,
/// each with additive tolerance `tol`.
L1BoundReport verify_l1_bound(const Perturbation& delta, const Image& image, double epsilon_a,
                              double floor = 1.0 / 255.0, double tol = 1e-9);

}  // namespace shadowstorm
