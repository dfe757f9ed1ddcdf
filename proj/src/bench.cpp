#include "shadowstorm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <thread>
#include <tuple>

#include "shadowstorm/error.hpp"
#include "shadowstorm/numeric.hpp"

namespace shadowstorm {

std::vector<double> default_budgets() {
  return {1.0 / 255.0, 2.0 / 255.0, 4.0 / 255.0, 8.0 / 255.0, 16.0 / 255.0};
}

double parse_budget(const std::string& text) {
  auto parse_real = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw UsageError("cannot parse budget '" + text + "'");
    }
    if (used != s.size()) throw UsageError("cannot parse budget '" + text + "'");
    return v;
  };
  const auto slash = text.find('/');
  if (slash == std::string::npos) return parse_real(text);
  const double num = parse_real(text.substr(0, slash));
  const double den = parse_real(text.substr(slash + 1));
  if (den == 0.0) throw UsageError("budget '" + text + "' divides by zero");
  return num / den;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string format_exact(double v) {
  if (!std::isfinite(v)) return format_number(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void SweepSpec::validate() const {
  if (budgets.empty()) throw UsageError("at least one budget is required");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (!(budgets[i] > 0.0 && budgets[i] < 1.0)) throw UsageError("budgets must lie in (0, 1)");
    if (i && !(budgets[i - 1] < budgets[i])) throw UsageError("budgets must be sorted ascending without repeats");
  }
  if (modes.empty()) throw UsageError("at least one attack mode is required");
  if (iterations < 1) throw UsageError("iterations must be at least 1");
  if (!(step_divisor > 0.0)) throw UsageError("step divisor must be positive");
  if (jobs < 1) throw UsageError("jobs must be at least 1");
  if (mask_dilation < 0) throw UsageError("mask dilation must be non-negative");
}

std::vector<BenchImage> bench_images(std::vector<DatasetEntry> entries) {
  std::vector<BenchImage> out;
  out.reserve(entries.size());
  for (DatasetEntry& e : entries) {
    char id[32];
    std::snprintf(id, sizeof id, "%04d", e.index);
    out.push_back(BenchImage{e.index, id, std::move(e.triplet)});
  }
  return out;
}

std::uint64_t attack_seed(std::uint64_t sweep_seed, int index) {
  return derive_seed(sweep_seed, {0x61747461636bULL, static_cast<std::uint64_t>(index)});
}

ResultRow attack_and_measure(const DiffModel& model, const BenchImage& image, AttackMode mode, double epsilon,
                             const SweepSpec& spec, std::optional<AttackResult>* keep) {
  const auto start = std::chrono::steady_clock::now();
  const Triplet& t = image.triplet;
  AttackConfig config;
  config.mode = mode;
  config.epsilon = (mode == AttackMode::uniform && spec.equalize) ? equivalent_uniform_budget(t.shadow, epsilon)
                                                                  : epsilon;
  config.iterations = spec.iterations;
  config.step_divisor = spec.step_divisor;
  config.seed = attack_seed(spec.seed, image.index);
  config.intensity_floor = spec.intensity_floor;
  config.step_rule = spec.step_rule;

  AttackResult attack = pgd_attack(model, t.shadow, config);
  const Image clean_out = model.forward(t.shadow);
  const Image attacked_out = model.forward(attack.attacked_image);
  const ShadowMask mask = dilate_mask(t.mask, spec.mask_dilation);

  ResultRow row;
  row.image_id = image.id;
  row.mode = mode;
  row.epsilon_nominal = epsilon;
  row.epsilon_effective = config.epsilon;
  row.vs_truth = region_metrics(attacked_out, t.shadow_free, mask);
  row.vs_clean = region_metrics(attacked_out, clean_out, mask);
  row.norms = perturbation_norms(attack.perturbation.data, t.shadow, spec.intensity_floor);
  row.iterations = config.iterations;
  if (spec.timing) {
    row.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  if (keep) *keep = std::move(attack);
  return row;
}

namespace {

struct Cell {
  std::size_t image;
  AttackMode mode;
  double epsilon;
};

bool row_less(const ResultRow& a, const ResultRow& b) {
  return std::forward_as_tuple(a.image_id, to_string(a.mode), a.epsilon_nominal) <
         std::forward_as_tuple(b.image_id, to_string(b.mode), b.epsilon_nominal);
}

template <typename F>
void parallel_for(std::size_t count, int jobs, F&& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  for (std::size_t w = 0; w < n; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  }
  for (auto& th : workers) th.join();
}

void add_into(MetricReport& acc, const MetricReport& r) {
  acc.psnr_all += r.psnr_all;
  acc.psnr_shadow += r.psnr_shadow;
  acc.psnr_nonshadow += r.psnr_nonshadow;
  acc.ssim_all += r.ssim_all;
  acc.ssim_shadow += r.ssim_shadow;
  acc.ssim_nonshadow += r.ssim_nonshadow;
}

void divide(MetricReport& r, double n) {
  r.psnr_all /= n;
  r.psnr_shadow /= n;
  r.psnr_nonshadow /= n;
  r.ssim_all /= n;
  r.ssim_shadow /= n;
  r.ssim_nonshadow /= n;
}

void metric_fields(std::ostream& out, const MetricReport& r) {
  out << ',' << format_number(r.psnr_all) << ',' << format_number(r.psnr_shadow) << ','
      << format_number(r.psnr_nonshadow) << ',' << format_number(r.ssim_all) << ',' << format_number(r.ssim_shadow)
      << ',' << format_number(r.ssim_nonshadow);
}

}  // namespace

SweepResult run_sweep(const DiffModel& model, const std::vector<BenchImage>& images, const SweepSpec& spec) {
  spec.validate();
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (AttackMode mode : spec.modes) {
      for (double eps : spec.budgets) cells.push_back({i, mode, eps});
    }
  }

  std::vector<std::optional<ResultRow>> rows(cells.size());
  std::vector<std::string> errors(cells.size());
  parallel_for(cells.size(), spec.jobs, [&](std::size_t c) {
    const Cell& cell = cells[c];
    try {
      rows[c] = attack_and_measure(model, images[cell.image], cell.mode, cell.epsilon, spec);
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  });

  std::vector<std::optional<CleanRow>> clean(images.size());
  std::vector<std::string> clean_errors(images.size());
  parallel_for(images.size(), spec.jobs, [&](std::size_t i) {
    try {
      const Triplet& t = images[i].triplet;
      const ShadowMask mask = dilate_mask(t.mask, spec.mask_dilation);
      clean[i] = CleanRow{images[i].id, region_metrics(model.forward(t.shadow), t.shadow_free, mask)};
    } catch (const std::exception& e) {
      clean_errors[i] = e.what();
    }
  });

  SweepResult result;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (rows[c]) {
      result.rows.push_back(std::move(*rows[c]));
    } else {
      result.failures.push_back({images[cells[c].image].id, cells[c].mode, cells[c].epsilon, errors[c]});
    }
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (clean[i]) {
      result.clean.push_back(std::move(*clean[i]));
    } else {
      result.failures.push_back({images[i].id, AttackMode::adaptive, 0.0, "clean evaluation: " + clean_errors[i]});
    }
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), row_less);
  std::stable_sort(result.clean.begin(), result.clean.end(),
                   [](const CleanRow& a, const CleanRow& b) { return a.image_id < b.image_id; });
  result.summary = summarize(result.rows, result.clean);
  return result;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows, const std::vector<CleanRow>& clean) {
  std::vector<SummaryRow> out;
  if (!clean.empty()) {
    SummaryRow s{"clean", 0.0, clean.size(), {}, {}, {}};
    for (const CleanRow& c : clean) add_into(s.vs_truth, c.vs_truth);
    divide(s.vs_truth, static_cast<double>(clean.size()));
    s.vs_clean = MetricReport{INFINITY, INFINITY, INFINITY, 1.0, 1.0, 1.0};
    out.push_back(s);
  }
  std::map<std::pair<std::string, double>, SummaryRow> groups;
  for (const ResultRow& r : rows) {
    SummaryRow& s = groups[{to_string(r.mode), r.epsilon_nominal}];
    s.label = to_string(r.mode);
    s.epsilon = r.epsilon_nominal;
    ++s.images;
    add_into(s.vs_truth, r.vs_truth);
    add_into(s.vs_clean, r.vs_clean);
    s.norms.l1_mean += r.norms.l1_mean;
    s.norms.linf += r.norms.linf;
    s.norms.linf_normalized += r.norms.linf_normalized;
  }
  for (auto& [key, s] : groups) {
    const double n = static_cast<double>(s.images);
    divide(s.vs_truth, n);
    divide(s.vs_clean, n);
    s.norms.l1_mean /= n;
    s.norms.linf /= n;
    s.norms.linf_normalized /= n;
    out.push_back(s);
  }
  return out;
}

std::vector<std::string> csv_columns() {
  return {"image_id",          "mode",           "epsilon_nominal",      "epsilon_effective",
          "psnr_gt_all",       "psnr_gt_shadow", "psnr_gt_nonshadow",    "ssim_gt_all",
          "ssim_gt_shadow",    "ssim_gt_nonshadow", "psnr_clean_all",    "psnr_clean_shadow",
          "psnr_clean_nonshadow", "ssim_clean_all", "ssim_clean_shadow", "ssim_clean_nonshadow",
          "l1_mean",           "linf",           "linf_normalized",      "iterations",
          "runtime_ms"};
}

namespace {
void header_line(std::ostream& out, const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}
}  // namespace

void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kCsvSchemaLine << '\n';
  out << "# gt = attacked output vs shadow-free ground truth; clean = attacked output vs output on the clean input\n";
  out << "# runtime_ms is 0 unless timing was requested\n";
  header_line(out, csv_columns());
  for (const ResultRow& r : rows) {
    out << r.image_id << ',' << to_string(r.mode) << ',' << format_number(r.epsilon_nominal) << ','
        << format_exact(r.epsilon_effective);
    metric_fields(out, r.vs_truth);
    metric_fields(out, r.vs_clean);
    out << ',' << format_number(r.norms.l1_mean) << ',' << format_number(r.norms.linf) << ','
        << format_number(r.norms.linf_normalized) << ',' << r.iterations << ',' << format_number(r.runtime_ms)
        << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& summary) {
  out << kCsvSchemaLine << '\n';
  out << "# summary: arithmetic mean of per-image metrics over images, per mode and nominal budget\n";
  header_line(out, {"mode", "epsilon_nominal", "images", "psnr_gt_all", "psnr_gt_shadow", "psnr_gt_nonshadow",
                    "ssim_gt_all", "ssim_gt_shadow", "ssim_gt_nonshadow", "psnr_clean_all", "psnr_clean_shadow",
                    "psnr_clean_nonshadow", "ssim_clean_all", "ssim_clean_shadow", "ssim_clean_nonshadow",
                    "l1_mean", "linf", "linf_normalized"});
  for (const SummaryRow& s : summary) {
    out << s.label << ',' << format_number(s.epsilon) << ',' << s.images;
    metric_fields(out, s.vs_truth);
    metric_fields(out, s.vs_clean);
    out << ',' << format_number(s.norms.l1_mean) << ',' << format_number(s.norms.linf) << ','
        << format_number(s.norms.linf_normalized) << '\n';
  }
}

void write_plot_data(std::ostream& out, const std::vector<SummaryRow>& summary) {
  out << "# mode epsilon psnr_all psnr_shadow psnr_nonshadow ssim_all ssim_shadow ssim_nonshadow\n";
  for (const SummaryRow& s : summary) {
    const MetricReport& r = s.vs_truth;
    out << s.label << ' ' << format_number(s.epsilon) << ' ' << format_number(r.psnr_all) << ' '
        << format_number(r.psnr_shadow) << ' ' << format_number(r.psnr_nonshadow) << ' '
        << format_number(r.ssim_all) << ' ' << format_number(r.ssim_shadow) << ' '
        << format_number(r.ssim_nonshadow) << '\n';
  }
}

}  // namespace shadowstorm
