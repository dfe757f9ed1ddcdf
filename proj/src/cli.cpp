#include "shadowstorm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "shadowstorm/attack.hpp"
#include "shadowstorm/bench.hpp"
#include "shadowstorm/error.hpp"
#include "shadowstorm/metrics.hpp"
#include "shadowstorm/models.hpp"
#include "shadowstorm/numeric.hpp"
#include "shadowstorm/pnm.hpp"
#include "shadowstorm/synthdata.hpp"

namespace fs = std::filesystem;

namespace shadowstorm {
namespace {

// Shared by attack and bench.
struct AttackFlags {
  std::string model = "gainmap";
  std::uint64_t model_seed = 42;
  int iterations = 20;
  double step_divisor = 4.0;
  std::uint64_t seed = 0;
  double floor = 1.0 / 255.0;
  std::string step_rule = "per-pixel";
  bool equalize = false;

  void add_to(CLI::App& app) {
    app.add_option("--model", model, "zoo model (identity, gainmap, tinycnn) or params file")->capture_default_str();
    app.add_option("--model-seed", model_seed, "initialisation seed for zoo models")->capture_default_str();
    app.add_option("--iters", iterations, "PGD iterations")->capture_default_str();
    app.add_option("--step-div", step_divisor, "step size is budget / step-div")->capture_default_str();
    app.add_option("--seed", seed, "seed of the random start")->capture_default_str();
    app.add_option("--floor", floor, "intensity floor for the adaptive budget")->capture_default_str();
    app.add_option("--step-rule", step_rule, "per-pixel or scalar adaptive step")
        ->check(CLI::IsMember({"per-pixel", "scalar"}))
        ->capture_default_str();
    app.add_flag("--equalize", equalize, "uniform budget becomes epsilon * mean intensity of each image");
  }

  SweepSpec sweep() const {
    SweepSpec spec;
    spec.iterations = iterations;
    spec.step_divisor = step_divisor;
    spec.seed = seed;
    spec.intensity_floor = floor;
    spec.step_rule = step_rule == "scalar" ? StepRule::scalar : StepRule::per_pixel;
    spec.equalize = equalize;
    return spec;
  }
};

std::pair<int, int> parse_size(const std::string& text) {
  int h = 0, w = 0;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> h >> x >> w) || (x != 'x' && x != 'X') || !in.eof()) {
    throw UsageError("size must look like HxW, got '" + text + "'");
  }
  return {h, w};
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  return f;
}

void finish(std::ofstream& f, const fs::path& path) {
  f.flush();
  if (!f) throw IoError("failed writing " + path.string());
}

std::string pnm_extension(const Image& image) { return image.channels() == 3 ? ".ppm" : ".pgm"; }

// |v| * stretch clipped to [0, 1]; stretch maps the largest magnitude to 1.
std::pair<Image, double> stretched(const Shape& shape, const std::vector<double>& values) {
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, std::fabs(v));
  const double stretch = peak > 0.0 ? 1.0 / peak : 1.0;
  std::vector<double> vis(values.size());
  for (std::size_t i = 0; i < vis.size(); ++i) vis[i] = std::min(1.0, std::fabs(values[i]) * stretch);
  return {Image(shape, std::move(vis)), stretch};
}

int cmd_gen(const SynthConfig& config, const std::string& size, const std::string& out_dir, std::ostream& out) {
  SynthConfig c = config;
  std::tie(c.height, c.width) = parse_size(size);
  const auto infos = gen_dataset(c, out_dir);
  out << "wrote " << infos.size() << " triplets to " << out_dir << '\n';
  return kExitOk;
}

struct AttackArgs {
  AttackFlags flags;
  std::string mode;
  std::string eps;
  std::string image;
  std::string mask;
  std::string free;
  std::string out_prefix;
};

int cmd_attack(const AttackArgs& a, std::ostream& out) {
  const AttackMode mode = parse_attack_mode(a.mode);
  const double epsilon = parse_budget(a.eps);
  SweepSpec spec = a.flags.sweep();
  // Budget validation happens in the attack, but fail before any file is read.
  AttackConfig probe;
  probe.epsilon = epsilon;
  probe.iterations = spec.iterations;
  probe.step_divisor = spec.step_divisor;
  probe.intensity_floor = spec.intensity_floor;
  probe.validate();

  const auto model = make_model(a.flags.model, a.flags.model_seed);
  Image image = load_pnm(a.image);
  ShadowMask mask = load_mask(a.mask);
  const bool have_truth = !a.free.empty();
  Image truth = have_truth ? load_pnm(a.free) : image;
  if (!mask.matches(image.shape())) throw UsageError("mask does not match image " + image.shape().str());
  if (truth.shape() != image.shape()) throw UsageError("shadow-free image does not match image " + image.shape().str());
  const BenchImage item{0, fs::path(a.image).stem().string(), Triplet{image, mask, truth}};

  std::optional<AttackResult> kept;
  ResultRow row = attack_and_measure(*model, item, mode, epsilon, spec, &kept);
  const AttackResult& attack = *kept;
  if (!have_truth) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.vs_truth = MetricReport{nan, nan, nan, nan, nan, nan};
  }

  const std::string prefix = a.out_prefix;
  if (const fs::path dir = fs::path(prefix + "_").parent_path(); !dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
  }
  const std::string ext = pnm_extension(image);
  save_pnm(attack.attacked_image, prefix + "_attacked" + ext);
  const auto [delta_vis, delta_stretch] = stretched(image.shape(), attack.perturbation.data);
  save_pnm(delta_vis, prefix + "_delta" + ext);
  const auto [norm_vis, norm_stretch] =
      stretched(image.shape(), normalized_perturbation_map(attack.perturbation.data, image, spec.intensity_floor));
  save_pnm(norm_vis, prefix + "_normalized" + ext);

  const fs::path vis_path = prefix + "_visual.txt";
  auto vis = open_output(vis_path);
  vis << "# displayed value = min(1, |value| * stretch)\n";
  vis << "delta_stretch " << format_number(delta_stretch) << '\n';
  vis << "normalized_stretch " << format_number(norm_stretch) << '\n';
  finish(vis, vis_path);

  const fs::path csv_path = prefix + ".csv";
  auto csv = open_output(csv_path);
  write_rows_csv(csv, {row});
  finish(csv, csv_path);

  out << to_string(mode) << " attack on " << a.image << ": epsilon " << format_number(row.epsilon_effective)
      << ", l1_mean " << format_number(row.norms.l1_mean) << ", linf " << format_number(row.norms.linf)
      << ", linf_normalized " << format_number(row.norms.linf_normalized) << '\n';
  return kExitOk;
}

struct BenchArgs {
  AttackFlags flags;
  std::string dataset;
  std::string modes = "adaptive,uniform";
  std::string budgets = "1/255,2/255,4/255,8/255,16/255";
  std::string out_csv;
  std::string summary;
  std::string plot;
  int jobs = 1;
  int mask_dilation = 0;
  bool timing = false;
};

fs::path sibling(const std::string& csv, const std::string& suffix) {
  fs::path p(csv);
  return p.parent_path() / (p.stem().string() + suffix);
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  SweepSpec spec = a.flags.sweep();
  spec.budgets.clear();
  for (const std::string& b : split_list(a.budgets)) spec.budgets.push_back(parse_budget(b));
  std::sort(spec.budgets.begin(), spec.budgets.end());
  spec.modes.clear();
  for (const std::string& m : split_list(a.modes)) spec.modes.push_back(parse_attack_mode(m));
  spec.jobs = a.jobs;
  spec.mask_dilation = a.mask_dilation;
  spec.timing = a.timing;
  spec.validate();

  const auto model = make_model(a.flags.model, a.flags.model_seed);
  if (!fs::is_directory(a.dataset)) throw IoError("dataset directory " + a.dataset + " does not exist");
  const std::vector<BenchImage> images = bench_images(load_triplet_dir(a.dataset));
  if (images.empty()) err << "warning: no triplets found in " << a.dataset << '\n';

  const SweepResult result = run_sweep(*model, images, spec);

  const fs::path csv_path = a.out_csv;
  const fs::path summary_path = a.summary.empty() ? sibling(a.out_csv, "_summary.csv") : fs::path(a.summary);
  const fs::path plot_path = a.plot.empty() ? sibling(a.out_csv, "_plot.dat") : fs::path(a.plot);
  {
    auto f = open_output(csv_path);
    write_rows_csv(f, result.rows);
    finish(f, csv_path);
  }
  {
    auto f = open_output(summary_path);
    write_summary_csv(f, result.summary);
    finish(f, summary_path);
  }
  {
    auto f = open_output(plot_path);
    write_plot_data(f, result.summary);
    finish(f, plot_path);
  }

  for (const CellFailure& f : result.failures) {
    err << "failed: image " << f.image_id << ' ' << to_string(f.mode) << " epsilon " << format_number(f.epsilon)
        << ": " << f.message << '\n';
  }
  out << result.rows.size() << " rows over " << images.size() << " images written to " << csv_path.string() << '\n';
  for (const SummaryRow& s : result.summary) {
    out << "  " << s.label << " eps=" << format_number(s.epsilon) << " psnr_gt_all=" << format_number(s.vs_truth.psnr_all)
        << " ssim_gt_all=" << format_number(s.vs_truth.ssim_all) << '\n';
  }
  return result.failures.empty() ? kExitOk : kExitPartial;
}

struct GradcheckArgs {
  std::string model = "all";
  std::uint64_t model_seed = 42;
  int samples = 20;
  std::string size = "16x16";
  double h = 1e-4;
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  if (a.samples < 1) throw UsageError("samples must be at least 1");
  if (!(a.h > 0.0) || !(a.tol > 0.0)) throw UsageError("h and tol must be positive");
  const auto [h, w] = parse_size(a.size);
  const std::vector<std::string> names = a.model == "all" ? zoo_names() : split_list(a.model);

  ad::GradCheckOptions options;
  options.h = a.h;
  options.tol = a.tol;
  bool all_passed = true;
  for (const std::string& name : names) {
    const auto model = make_model(name, a.model_seed);
    double worst = 0.0;
    int worst_sample = 0;
    std::size_t checked = 0, skipped = 0;
    ad::GradCheckReport worst_report;
    for (int s = 0; s < a.samples; ++s) {
      const Image input = gradcheck_image(h, w, derive_seed(a.seed, {static_cast<std::uint64_t>(s)}));
      const ad::GradCheckReport report =
          model_grad_check(*model, input, derive_seed(a.seed, {static_cast<std::uint64_t>(s), 1}), options);
      checked += report.checked;
      skipped += report.skipped_nonsmooth;
      // A failing sample outranks any passing one; among equals keep the largest error.
      const bool fails_first = !report.passed && (s == 0 || worst_report.passed);
      const bool larger = report.max_rel_error > worst && report.passed == worst_report.passed;
      if (s == 0 || fails_first || larger) {
        worst = report.max_rel_error;
        worst_sample = s;
        worst_report = report;
      }
    }
    out << name << ": max relative error " << format_number(worst) << " over " << a.samples << " samples of " << h
        << "x" << w << " (" << checked << " coordinates checked, " << skipped << " skipped next to kinks)\n";
    if (!worst_report.passed) {
      all_passed = false;
      err << "gradient check failed for " << name << " on sample " << worst_sample << ": "
          << worst_report.summary() << '\n';
    }
  }
  return all_passed ? kExitOk : kExitValidation;
}

struct TrainArgs {
  std::string dataset;
  int epochs = 200;
  double lr = 0.05;
  std::uint64_t seed = 42;
  std::string out_params;
  std::string log;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.epochs < 0) throw UsageError("epochs must be non-negative");
  if (!(a.lr > 0.0)) throw UsageError("learning rate must be positive");
  if (!fs::is_directory(a.dataset)) throw IoError("dataset directory " + a.dataset + " does not exist");
  std::vector<TrainingPair> pairs;
  for (DatasetEntry& e : load_triplet_dir(a.dataset)) {
    pairs.push_back(TrainingPair{std::move(e.triplet.shadow), std::move(e.triplet.shadow_free)});
  }
  if (pairs.empty()) throw UsageError("no triplets found in " + a.dataset);

  auto model = model_tinycnn(a.seed);
  const TrainReport report = train_toy(*model, pairs, a.epochs, a.lr);
  save_params(report.params, a.out_params);

  const fs::path log_path = a.log.empty() ? fs::path(a.out_params + ".loss.csv") : fs::path(a.log);
  auto log = open_output(log_path);
  log << "# shadowstorm-train v1\n";
  log << "# loss before each epoch's update; final is after the last update\n";
  log << "epoch,loss\n";
  for (std::size_t i = 0; i < report.epoch_losses.size(); ++i) {
    log << i << ',' << format_number(report.epoch_losses[i]) << '\n';
  }
  log << "final," << format_number(report.final_loss) << '\n';
  finish(log, log_path);

  out << "trained tinycnn for " << a.epochs << " epochs on " << pairs.size() << " pairs; final loss "
      << format_number(report.final_loss) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shadow-adaptive adversarial attacks on shadow-removal models"};
  app.name("shadowstorm");
  app.require_subcommand(1);

  SynthConfig gen_config;
  std::string gen_size = "64x64";
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "generate synthetic shadow / mask / shadow-free triplets");
  gen->add_option("--seed", gen_config.seed, "dataset seed")->capture_default_str();
  gen->add_option("--count", gen_config.count, "number of triplets")->capture_default_str();
  gen->add_option("--size", gen_size, "image size HxW")->capture_default_str();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--k-min", gen_config.k_min, "smallest attenuation")->capture_default_str();
  gen->add_option("--k-max", gen_config.k_max, "largest attenuation")->capture_default_str();
  gen->add_option("--area-min", gen_config.area_min, "smallest shadow area fraction")->capture_default_str();
  gen->add_option("--area-max", gen_config.area_max, "largest shadow area fraction")->capture_default_str();
  gen->add_option("--penumbra", gen_config.blur_radius, "mask blur radius")->capture_default_str();

  AttackArgs attack_args;
  auto* attack = app.add_subcommand("attack", "attack one image and write the perturbation artifacts");
  attack_args.flags.add_to(*attack);
  attack->add_option("--mode", attack_args.mode, "uniform or adaptive")->required();
  attack->add_option("--eps", attack_args.eps, "budget, e.g. 16/255 or 0.0627")->required();
  attack->add_option("--image", attack_args.image, "shadow image (PPM/PGM)")->required();
  attack->add_option("--mask", attack_args.mask, "shadow mask (PGM)")->required();
  attack->add_option("--free", attack_args.free, "shadow-free ground truth (optional)");
  attack->add_option("--out-prefix", attack_args.out_prefix, "prefix of every output file")->required();

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "sweep attack modes and budgets over a dataset");
  bench_args.flags.add_to(*bench);
  bench->add_option("--dataset", bench_args.dataset, "directory of triplets")->required();
  bench->add_option("--modes", bench_args.modes, "comma-separated attack modes")->capture_default_str();
  bench->add_option("--budgets", bench_args.budgets, "comma-separated budgets")->capture_default_str();
  bench->add_option("--out", bench_args.out_csv, "per-row CSV")->required();
  bench->add_option("--summary", bench_args.summary, "summary CSV (default <out>_summary.csv)");
  bench->add_option("--plot", bench_args.plot, "plot data (default <out>_plot.dat)");
  bench->add_option("--jobs", bench_args.jobs, "worker threads")->capture_default_str();
  bench->add_option("--mask-dilation", bench_args.mask_dilation, "dilate the shadow mask before region metrics")
      ->capture_default_str();
  bench->add_flag("--timing", bench_args.timing, "record runtime_ms (output no longer reproducible)");

  GradcheckArgs gc_args;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare model gradients with central differences");
  gradcheck->set_help_flag("--help", "print this help message and exit");  // -h would clash with --h
  gradcheck->add_option("--model", gc_args.model, "all, zoo names, or a params file")->capture_default_str();
  gradcheck->add_option("--model-seed", gc_args.model_seed, "initialisation seed for zoo models")
      ->capture_default_str();
  gradcheck->add_option("--samples", gc_args.samples, "random inputs per model")->capture_default_str();
  gradcheck->add_option("--size", gc_args.size, "input size HxW")->capture_default_str();
  gradcheck->add_option("--h", gc_args.h, "finite-difference step")->capture_default_str();
  gradcheck->add_option("--tol", gc_args.tol, "relative error tolerance")->capture_default_str();
  gradcheck->add_option("--seed", gc_args.seed, "seed of the random inputs")->capture_default_str();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train the tiny CNN on shadow -> shadow-free pairs");
  train->add_option("--dataset", train_args.dataset, "directory of triplets")->required();
  train->add_option("--epochs", train_args.epochs, "full-batch epochs")->capture_default_str();
  train->add_option("--lr", train_args.lr, "learning rate")->capture_default_str();
  train->add_option("--seed", train_args.seed, "initialisation seed")->capture_default_str();
  train->add_option("--out", train_args.out_params, "params file")->required();
  train->add_option("--log", train_args.log, "loss log CSV (default <out>.loss.csv)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    err << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_config, gen_size, gen_out, out);
    if (*attack) return cmd_attack(attack_args, out);
    if (*bench) return cmd_bench(bench_args, out, err);
    if (*gradcheck) return cmd_gradcheck(gc_args, out, err);
    if (*train) return cmd_train(train_args, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace shadowstorm
