#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "shadowstorm/attack.hpp"
#include "shadowstorm/metrics.hpp"
#include "shadowstorm/models.hpp"
#include "shadowstorm/synthdata.hpp"

namespace shadowstorm {

inline constexpr const char* kCsvSchemaLine = "# shadowstorm-csv v1";

/// Budgets {1, 2, 4, 8, 16} / 255.
std::vector<double> default_budgets();

/// Accepts "a/b" fractions or decimals.
double parse_budget(const std::string& text);

/// 9 significant digits; "inf", "-inf" and "nan" for non-finite values.
std::string format_number(double v);

/// Round-trip precision; used for the per-image effective budget, which is recomputed downstream.
std::string format_exact(double v);

struct SweepSpec {
  std::vector<double> budgets = default_budgets();
  std::vector<AttackMode> modes = {AttackMode::adaptive, AttackMode::uniform};
  /// Uniform runs use epsilon_a * mean(I) of each image instead of the nominal budget.
  bool equalize = false;
  int iterations = 20;
  double step_divisor = 4.0;
  double intensity_floor = 1.0 / 255.0;
  StepRule step_rule = StepRule::per_pixel;
  std::uint64_t seed = 0;
  int jobs = 1;
  /// Shadow-mask dilation applied before region metrics.
  int mask_dilation = 0;
  /// Record wall-clock time per row; off keeps output byte-reproducible.
  bool timing = false;

  void validate() const;
};

struct BenchImage {
  int index = 0;
  std::string id;
  Triplet triplet;
};

std::vector<BenchImage> bench_images(std::vector<DatasetEntry> entries);

/// Seed used to initialise the attack on image `index`; shared by every mode and budget.
std::uint64_t attack_seed(std::uint64_t sweep_seed, int index);

struct ResultRow {
  std::string image_id;
  AttackMode mode = AttackMode::adaptive;
  double epsilon_nominal = 0.0;
  double epsilon_effective = 0.0;
  /// Attacked model output against the shadow-free ground truth.
  MetricReport vs_truth;
  /// Attacked model output against the model's output on the clean input.
  MetricReport vs_clean;
  PerturbationNorms norms;
  int iterations = 0;
  double runtime_ms = 0.0;
};

struct CleanRow {
  std::string image_id;
  MetricReport vs_truth;
};

struct CellFailure {
  std::string image_id;
  AttackMode mode = AttackMode::adaptive;
  double epsilon = 0.0;
  std::string message;
};

struct SummaryRow {
  std::string label;  // attack mode, or "clean"
  double epsilon = 0.0;
  std::size_t images = 0;
  MetricReport vs_truth;
  MetricReport vs_clean;
  PerturbationNorms norms;
};

struct SweepResult {
  std::vector<ResultRow> rows;
  std::vector<CleanRow> clean;
  std::vector<CellFailure> failures;
  std::vector<SummaryRow> summary;
};

/// Attacks one image and measures the result. `keep`, if given, receives the raw attack.
ResultRow attack_and_measure(const DiffModel& model, const BenchImage& image, AttackMode mode, double epsilon,
                             const SweepSpec& spec, std::optional<AttackResult>* keep = nullptr);

/// Runs every (image, mode, budget) cell. Rows come back sorted by (image_id, mode, epsilon)
/// regardless of `spec.jobs`.
SweepResult run_sweep(const DiffModel& model, const std::vector<BenchImage>& images, const SweepSpec& spec);

/// Arithmetic means over images per (mode, budget), plus a "clean" row.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows, const std::vector<CleanRow>& clean);

std::vector<std::string> csv_columns();
void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& summary);
/// Whitespace-separated columns: label, epsilon, ground-truth PSNR/SSIM per region.
void write_plot_data(std::ostream& out, const std::vector<SummaryRow>& summary);

}  // namespace shadowstorm
