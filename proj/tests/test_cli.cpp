#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <sstream>

#include "shadowstorm/bench.hpp"
#include "shadowstorm/cli.hpp"
#include "shadowstorm/image.hpp"
#include "shadowstorm/models.hpp"
#include "test_util.hpp"

using namespace shadowstorm;
using testutil::slurp;
using testutil::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

using Row = std::map<std::string, std::string>;

// Rows of a shadowstorm CSV keyed by column name; comment lines are skipped.
std::vector<Row> read_csv(const std::filesystem::path& path) {
  std::istringstream in(slurp(path));
  std::string line;
  std::vector<std::string> header;
  std::vector<Row> rows;
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    return f;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header.empty()) {
      header = split(line);
      continue;
    }
    const auto f = split(line);
    REQUIRE(f.size() == header.size());
    Row r;
    for (std::size_t i = 0; i < f.size(); ++i) r[header[i]] = f[i];
    rows.push_back(r);
  }
  return rows;
}

double num(const Row& r, const std::string& key) { return std::stod(r.at(key)); }

std::string gen(const TempDir& dir, int count, const std::string& size = "32x32", int seed = 1) {
  const std::string data = (dir / "data").string();
  const Run r = run({"gen", "--seed", std::to_string(seed), "--count", std::to_string(count), "--size", size, "--out",
                     data});
  REQUIRE(r.code == kExitOk);
  return data;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"gen", "--count", "2"}).code == kExitUsage);
  CHECK(run({"gen", "--count", "0", "--out", "/tmp/x"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({"gradcheck", "--help"}).code == kExitOk);
}

TEST_CASE("gen writes triplets and is reproducible") {
  TempDir dir("cli-gen");
  const Run r = run({"gen", "--seed", "1", "--count", "8", "--size", "64x64", "--out", (dir / "a").string()});
  REQUIRE(r.code == kExitOk);
  std::size_t images = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
    const auto ext = e.path().extension();
    if (ext == ".ppm" || ext == ".pgm") ++images;
  }
  CHECK(images == 24);
  CHECK(std::filesystem::exists(dir / "a" / kManifestName));
  REQUIRE(run({"gen", "--seed", "1", "--count", "8", "--size", "64x64", "--out", (dir / "b").string()}).code == kExitOk);
  for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
    CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename().string()));
  }
  CHECK(run({"gen", "--size", "64", "--out", (dir / "c").string()}).code == kExitUsage);
}

TEST_CASE("attack writes artifacts within budget") {
  TempDir dir("cli-attack");
  const std::string data = gen(dir, 1, "48x48");
  const std::vector<std::string> base = {"attack", "--mode", "adaptive", "--eps", "16/255", "--seed", "3",
                                         "--image", data + "/shadow_0000.ppm", "--mask", data + "/mask_0000.pgm",
                                         "--free", data + "/free_0000.ppm"};
  auto with_prefix = [&](const std::string& p) {
    auto a = base;
    a.push_back("--out-prefix");
    a.push_back((dir / p).string());
    return a;
  };
  const Run r = run(with_prefix("out/one"));
  REQUIRE(r.code == kExitOk);
  for (const char* suffix : {"_attacked.ppm", "_delta.ppm", "_normalized.ppm", "_visual.txt", ".csv"}) {
    CHECK(std::filesystem::exists(dir / ("out/one" + std::string(suffix))));
  }
  const auto rows = read_csv(dir / "out/one.csv");
  REQUIRE(rows.size() == 1);
  CHECK(num(rows[0], "linf_normalized") <= 16.0 / 255.0 + 1e-9);
  CHECK(rows[0].at("mode") == "adaptive");
  CHECK(std::isfinite(num(rows[0], "psnr_gt_all")));
  CHECK(slurp(dir / "out/one.csv").rfind(kCsvSchemaLine, 0) == 0);
  CHECK(slurp(dir / "out/one_visual.txt").find("delta_stretch") != std::string::npos);

  REQUIRE(run(with_prefix("out/two")).code == kExitOk);
  CHECK(slurp(dir / "out/one.csv") == slurp(dir / "out/two.csv"));
  CHECK(slurp(dir / "out/one_attacked.ppm") == slurp(dir / "out/two_attacked.ppm"));

  auto zero = with_prefix("out/zero");
  zero[2] = "uniform";
  zero[4] = "0";
  CHECK(run(zero).code == kExitUsage);
  auto bad_mode = with_prefix("out/bad");
  bad_mode[2] = "sideways";
  CHECK(run(bad_mode).code == kExitUsage);
  auto missing = with_prefix("out/missing");
  missing[8] = (dir / "nope.ppm").string();
  CHECK(run(missing).code == kExitIo);

  // no ground truth: truth metrics are reported as nan
  auto no_truth = with_prefix("out/nt");
  no_truth.erase(no_truth.begin() + 11, no_truth.begin() + 13);
  REQUIRE(run(no_truth).code == kExitOk);
  CHECK(read_csv(dir / "out/nt.csv")[0].at("psnr_gt_all") == "nan");
}

TEST_CASE("bench sweep") {
  TempDir dir("cli-bench");
  const std::string data = gen(dir, 8);
  const std::string csv = (dir / "sweep.csv").string();
  const Run r = run({"bench", "--dataset", data, "--out", csv, "--seed", "5"});
  REQUIRE(r.code == kExitOk);
  const auto rows = read_csv(csv);
  CHECK(rows.size() == 80);
  CHECK(std::filesystem::exists(dir / "sweep_summary.csv"));
  CHECK(std::filesystem::exists(dir / "sweep_plot.dat"));
  for (const Row& row : rows) CHECK(num(row, "runtime_ms") == 0.0);

  const auto summary = read_csv(dir / "sweep_summary.csv");
  CHECK(summary.size() == 11);
  CHECK(summary.front().at("mode") == "clean");
  std::vector<double> adaptive;
  for (const Row& s : summary)
    if (s.at("mode") == "adaptive") adaptive.push_back(num(s, "psnr_gt_all"));
  REQUIRE(adaptive.size() == 5);
  for (std::size_t i = 1; i < adaptive.size(); ++i) CHECK(adaptive[i] < adaptive[i - 1]);

  // the same sweep split over threads
  const std::string csv4 = (dir / "sweep4.csv").string();
  REQUIRE(run({"bench", "--dataset", data, "--out", csv4, "--seed", "5", "--jobs", "4"}).code == kExitOk);
  CHECK(slurp(csv) == slurp(csv4));
  CHECK(slurp(dir / "sweep_summary.csv") == slurp(dir / "sweep4_summary.csv"));
  CHECK(slurp(dir / "sweep_plot.dat") == slurp(dir / "sweep4_plot.dat"));
}

TEST_CASE("bench with equalized budgets") {
  TempDir dir("cli-eq");
  const std::string data = gen(dir, 3);
  const std::string csv = (dir / "eq.csv").string();
  REQUIRE(run({"bench", "--dataset", data, "--out", csv, "--equalize", "--budgets", "4/255,16/255"}).code == kExitOk);
  const auto entries = load_triplet_dir(data);
  std::map<std::string, double> mean;
  for (const auto& e : entries) {
    long double acc = 0.0L;
    for (double v : e.triplet.shadow.data()) acc += v;
    char id[16];
    std::snprintf(id, sizeof id, "%04d", e.index);
    mean[id] = static_cast<double>(acc / e.triplet.shadow.size());
  }
  const auto rows = read_csv(csv);
  REQUIRE(rows.size() == 12);
  for (const Row& row : rows) {
    const double nominal = num(row, "epsilon_nominal") < 0.03 ? 4.0 / 255.0 : 16.0 / 255.0;
    CHECK(num(row, "epsilon_nominal") == doctest::Approx(nominal).epsilon(1e-8));
    if (row.at("mode") == "uniform") {
      CHECK(std::fabs(num(row, "epsilon_effective") - nominal * mean.at(row.at("image_id"))) <= 1e-12);
    } else {
      CHECK(std::fabs(num(row, "epsilon_effective") - nominal) <= 1e-15);
    }
  }
}

TEST_CASE("bench input errors") {
  TempDir dir("cli-bench-err");
  CHECK(run({"bench", "--dataset", (dir / "none").string(), "--out", (dir / "x.csv").string()}).code == kExitIo);
  const std::string data = gen(dir, 1);
  CHECK(run({"bench", "--dataset", data, "--out", (dir / "x.csv").string(), "--budgets", "abc"}).code == kExitUsage);
  CHECK(run({"bench", "--dataset", data, "--out", (dir / "x.csv").string(), "--jobs", "0"}).code == kExitUsage);
  const Run empty = run({"bench", "--dataset", dir.path().string(), "--out", (dir / "e.csv").string()});
  CHECK(empty.code == kExitOk);
  CHECK(empty.err.find("warning") != std::string::npos);
}

TEST_CASE("gradcheck") {
  const Run stock = run({"gradcheck"});
  CHECK(stock.code == kExitOk);
  for (const char* name : {"identity", "gainmap", "tinycnn"}) CHECK(stock.out.find(name) != std::string::npos);

  const Run id = run({"gradcheck", "--model", "identity", "--samples", "3"});
  CHECK(id.code == kExitOk);
  CHECK(id.out.find("max relative error 0 ") != std::string::npos);

  TempDir dir("cli-gc");
  testutil::spit(dir / "broken.params", "SSPM\x01garbage");
  CHECK(run({"gradcheck", "--model", (dir / "broken.params").string()}).code == kExitIo);
  CHECK(run({"gradcheck", "--model", "resnet"}).code == kExitIo);
  CHECK(run({"gradcheck", "--samples", "0"}).code == kExitUsage);
}

TEST_CASE("train") {
  TempDir dir("cli-train");
  const std::string data = gen(dir, 4);
  const std::string p0 = (dir / "p0.params").string();
  REQUIRE(run({"train", "--dataset", data, "--epochs", "0", "--seed", "9", "--out", p0}).code == kExitOk);
  const auto init = encode_params(model_tinycnn(9)->params());
  const std::string bytes = slurp(p0);
  CHECK(std::vector<std::uint8_t>(bytes.begin(), bytes.end()) == init);

  const std::string pa = (dir / "a.params").string(), pb = (dir / "b.params").string();
  REQUIRE(run({"train", "--dataset", data, "--epochs", "15", "--out", pa}).code == kExitOk);
  REQUIRE(run({"train", "--dataset", data, "--epochs", "15", "--out", pb}).code == kExitOk);
  CHECK(slurp(pa) == slurp(pb));
  CHECK(slurp(pa + ".loss.csv") == slurp(pb + ".loss.csv"));

  const auto log = read_csv(pa + ".loss.csv");
  REQUIRE(log.size() == 16);
  CHECK(log.back().at("epoch") == "final");
  CHECK(num(log.back(), "loss") < num(log.front(), "loss"));

  // trained params are usable by the other commands
  CHECK(run({"gradcheck", "--model", pa, "--samples", "2"}).code == kExitOk);

  CHECK(run({"train", "--dataset", data, "--lr", "1e308", "--out", (dir / "d.params").string()}).code ==
        kExitNumeric);
  CHECK(run({"train", "--dataset", (dir / "none").string(), "--out", (dir / "n.params").string()}).code == kExitIo);
}
