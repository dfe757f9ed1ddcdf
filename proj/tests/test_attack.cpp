#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "shadowstorm/attack.hpp"
#include "shadowstorm/error.hpp"
#include "shadowstorm/metrics.hpp"
#include "shadowstorm/numeric.hpp"
#include "shadowstorm/synthdata.hpp"

using namespace shadowstorm;

namespace {

Image random_image(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Xoshiro256 rng(seed);
  std::vector<double> px(shape.size());
  for (double& v : px) v = rng.uniform(lo, hi);
  return Image(shape, std::move(px));
}

AttackConfig config(AttackMode mode, double eps) {
  AttackConfig c;
  c.mode = mode;
  c.epsilon = eps;
  return c;
}

// Plain double-loop mean, independent of the library's exact summation.
double naive_mean(const Image& img) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < img.size(); ++i) acc += img[i];
  return static_cast<double>(acc / img.size());
}

}  // namespace

TEST_CASE("config validation") {
  AttackConfig c;
  CHECK_NOTHROW(c.validate());
  for (double eps : {0.0, -0.1, 1.0, std::nan("")}) {
    c = AttackConfig{};
    c.epsilon = eps;
    CHECK_THROWS_AS(c.validate(), UsageError);
  }
  c = AttackConfig{};
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = AttackConfig{};
  c.step_divisor = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = AttackConfig{};
  c.intensity_floor = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  CHECK(parse_attack_mode("uniform") == AttackMode::uniform);
  CHECK(parse_attack_mode("adaptive") == AttackMode::adaptive);
  CHECK_THROWS_AS(parse_attack_mode("fgsm"), UsageError);
}

TEST_CASE("budget box examples") {
  SUBCASE("uniform near white") {
    const BudgetBox b = budget_box(Image(Shape{1, 1, 1}, {0.95}), config(AttackMode::uniform, 0.1));
    CHECK(b.lower[0] == -0.1);
    CHECK(b.upper[0] == doctest::Approx(0.05).epsilon(1e-12));
  }
  SUBCASE("adaptive mid-dark pixel") {
    const BudgetBox b = budget_box(Image(Shape{1, 1, 1}, {0.1}), config(AttackMode::adaptive, 0.3));
    CHECK(b.lower[0] == doctest::Approx(-0.03).epsilon(1e-12));
    CHECK(b.upper[0] == doctest::Approx(0.03).epsilon(1e-12));
  }
  SUBCASE("adaptive black pixel uses the intensity floor") {
    const BudgetBox b = budget_box(Image(Shape{1, 1, 1}, {0.0}), config(AttackMode::adaptive, 0.3));
    CHECK(b.lower[0] == 0.0);
    CHECK(b.upper[0] == doctest::Approx(0.3 / 255.0).epsilon(1e-12));
  }
  SUBCASE("saturated image is degenerate only at the forbidden side") {
    const BudgetBox b = budget_box(Image(Shape{1, 2, 1}, {0.0, 1.0}), config(AttackMode::uniform, 0.1));
    CHECK(b.lower[0] == 0.0);
    CHECK(b.upper[1] == 0.0);
    CHECK_FALSE(b.degenerate());
  }
}

TEST_CASE("budget boxes grow with the budget and shrink to zero") {
  const Image img = random_image(Shape{6, 6, 3}, 1);
  for (AttackMode mode : {AttackMode::uniform, AttackMode::adaptive}) {
    const BudgetBox small = budget_box(img, config(mode, 2.0 / 255.0));
    const BudgetBox large = budget_box(img, config(mode, 8.0 / 255.0));
    for (std::size_t i = 0; i < img.size(); ++i) {
      CHECK(large.lower[i] <= small.lower[i]);
      CHECK(small.upper[i] <= large.upper[i]);
      CHECK(small.lower[i] <= 0.0);
      CHECK(small.upper[i] >= 0.0);
    }
    const AttackResult r = pgd_attack(*model_identity(), img, config(mode, 1e-9));
    for (double d : r.perturbation.data) CHECK(std::fabs(d) <= 1e-9);
  }
}

TEST_CASE("init_delta stays in the box and is reproducible") {
  const Image img = random_image(Shape{5, 5, 3}, 2);
  const BudgetBox box = budget_box(img, config(AttackMode::adaptive, 0.1));
  const Perturbation a = init_delta(box, 7), b = init_delta(box, 7), c = init_delta(box, 8);
  CHECK(box.contains(a.data));
  CHECK(a.data == b.data);
  CHECK(a.data != c.data);

  const BudgetBox flat{Shape{1, 1, 1}, {0.0}, {0.0}};
  CHECK(flat.degenerate());
  CHECK(init_delta(flat, 3).data[0] == 0.0);
}

TEST_CASE("init_delta is centred on the box midpoint") {
  // One coordinate, 1e5 independent seeds: the sample mean of U(lo, hi) is within 3 sigma of the midpoint.
  const BudgetBox box{Shape{1, 1, 1}, {-0.02}, {0.05}};
  const int n = 100000;
  double acc = 0.0;
  for (int s = 0; s < n; ++s) acc += init_delta(box, static_cast<std::uint64_t>(s)).data[0];
  const double mean = acc / n;
  const double width = 0.07;
  const double sigma = width / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::fabs(mean - 0.015) < 3.0 * sigma);
}

TEST_CASE("step sizes") {
  const Image img(Shape{1, 3, 1}, {0.0, 0.4, 1.0});
  AttackConfig c = config(AttackMode::adaptive, 0.2);
  const auto per_pixel = step_sizes(img, c);
  CHECK(per_pixel[0] == doctest::Approx(0.2 / 255.0 / 4.0).epsilon(1e-12));
  CHECK(per_pixel[1] == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(per_pixel[2] == doctest::Approx(0.05).epsilon(1e-12));
  c.step_rule = StepRule::scalar;
  for (double s : step_sizes(img, c)) CHECK(s == doctest::Approx(0.05).epsilon(1e-12));
  for (double s : step_sizes(img, config(AttackMode::uniform, 0.2))) CHECK(s == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("identity model drives interior pixels to the budget face") {
  // Objective on the identity model is ||delta||, whose gradient sign is sign(delta):
  // every coordinate walks outward and is clipped at +-eps.
  Xoshiro256 rng(5);
  std::vector<double> px(8 * 8 * 3);
  for (double& v : px) v = rng.uniform(0.15, 0.85);
  const Image img(Shape{8, 8, 3}, px);
  AttackConfig c = config(AttackMode::uniform, 0.1);
  c.seed = 9;
  const Perturbation init = init_delta(budget_box(img, c), c.seed);
  const AttackResult r = pgd_attack(*model_identity(), img, c);
  for (std::size_t i = 0; i < px.size(); ++i) {
    REQUIRE(init.data[i] != 0.0);
    CHECK(r.perturbation.data[i] == (init.data[i] > 0 ? 0.1 : -0.1));
  }
}

TEST_CASE("one huge step lands on the faces") {
  const Image img = random_image(Shape{6, 6, 3}, 3, 0.05, 0.95);
  for (AttackMode mode : {AttackMode::uniform, AttackMode::adaptive}) {
    AttackConfig c = config(mode, 8.0 / 255.0);
    c.iterations = 1;
    c.step_divisor = 0.01;
    const BudgetBox box = budget_box(img, c);
    const AttackResult r = pgd_attack(*model_gainmap(), img, c);
    std::size_t on_face = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
      const double d = r.perturbation.data[i];
      if (d == box.lower[i] || d == box.upper[i]) ++on_face;
    }
    // coordinates with a zero gradient keep their random start; the rest are clipped
    CHECK(on_face > img.size() / 2);
  }
}

TEST_CASE("every iterate respects its box") {
  const auto cnn = model_tinycnn(42);
  const Image img = random_image(Shape{12, 12, 3}, 4);
  for (AttackMode mode : {AttackMode::uniform, AttackMode::adaptive}) {
    AttackConfig c = config(mode, 16.0 / 255.0);
    c.seed = 3;
    const BudgetBox box = budget_box(img, c);
    const std::vector<double> ieff = effective_intensity(img, c.intensity_floor);
    int calls = 0;
    const AttackResult r = pgd_attack(*cnn, img, c, [&](int, std::span<const double> d) {
      ++calls;
      for (std::size_t i = 0; i < d.size(); ++i) {
        REQUIRE(d[i] >= box.lower[i]);
        REQUIRE(d[i] <= box.upper[i]);
        REQUIRE(img[i] + d[i] >= 0.0);
        REQUIRE(img[i] + d[i] <= 1.0);
        if (mode == AttackMode::adaptive) REQUIRE(std::fabs(d[i]) <= c.epsilon * ieff[i]);
      }
    });
    CHECK(calls == c.iterations);
    CHECK(r.objective_trace.size() == static_cast<std::size_t>(c.iterations));
    for (double v : r.objective_trace) CHECK(std::isfinite(v));
    const Image manual = apply_perturbation(img, r.perturbation.data);
    CHECK(std::memcmp(manual.data().data(), r.attacked_image.data().data(), img.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("attack is bit-reproducible") {
  const auto cnn = model_tinycnn(42);
  const Image img = random_image(Shape{10, 10, 3}, 6);
  AttackConfig c = config(AttackMode::adaptive, 8.0 / 255.0);
  c.seed = 77;
  const AttackResult a = pgd_attack(*cnn, img, c), b = pgd_attack(*cnn, img, c);
  CHECK(std::memcmp(a.perturbation.data.data(), b.perturbation.data.data(), img.size() * sizeof(double)) == 0);
  CHECK(a.objective_trace == b.objective_trace);
}

TEST_CASE("optimised perturbation beats the random start") {
  SynthConfig sc;
  sc.seed = 12;
  const Triplet t = gen_triplet(sc, 0).triplet;
  const auto g = model_gainmap();
  AttackConfig c = config(AttackMode::adaptive, 8.0 / 255.0);
  c.seed = 4;
  const AttackResult r = pgd_attack(*g, t.shadow, c);
  const Perturbation start = init_delta(budget_box(t.shadow, c), c.seed);
  const Image clean = g->forward(t.shadow);
  const double psnr_opt = psnr(clean, g->forward(r.attacked_image));
  const double psnr_init = psnr(clean, g->forward(apply_perturbation(t.shadow, start.data)));
  CHECK(psnr_opt < psnr_init);
}

TEST_CASE("equivalent uniform budget") {
  CHECK(equivalent_uniform_budget(Image::filled(Shape{4, 4, 3}, 0.4), 16.0 / 255.0) ==
        doctest::Approx(6.4 / 255.0).epsilon(1e-12));
  CHECK(std::fabs(equivalent_uniform_budget(Image::filled(Shape{4, 4, 3}, 0.4), 16.0 / 255.0) - 0.025098) < 1e-6);
  CHECK(equivalent_uniform_budget(Image::filled(Shape{3, 3, 1}, 1.0), 0.05) == 0.05);

  SynthConfig sc;
  sc.seed = 2;
  sc.count = 2;
  const Triplet t = gen_triplet(sc, 1).triplet;
  const double eps = 8.0 / 255.0;
  CHECK(std::fabs(equivalent_uniform_budget(t.shadow, eps) - eps * naive_mean(t.shadow)) <= 1e-12);
}

TEST_CASE("mean L1 bound") {
  const Image img = random_image(Shape{9, 7, 3}, 8, 0.05, 0.95);
  const double eps = 16.0 / 255.0;

  const L1BoundReport zero = verify_l1_bound(Perturbation::zeros(img.shape()), img, eps);
  CHECK(zero.holds);
  CHECK(zero.mean_abs == 0.0);

  // delta on the adaptive faces everywhere: the bound is attained
  Perturbation face = Perturbation::zeros(img.shape());
  double ieff_sum = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double ieff = std::max(img[i], 1.0 / 255.0);
    face.data[i] = (i % 2 ? -1.0 : 1.0) * eps * ieff;
    ieff_sum += ieff;
  }
  const L1BoundReport eq = verify_l1_bound(face, img, eps);
  CHECK(eq.holds);
  CHECK(std::fabs(eq.mean_abs - eps * ieff_sum / img.size()) <= 1e-9);
  CHECK(std::fabs(eq.mean_abs - eq.bound) <= 1e-9);

  Perturbation bad = face;
  bad.data[17] += (bad.data[17] > 0 ? 2e-9 : -2e-9);
  const L1BoundReport fail = verify_l1_bound(bad, img, eps);
  CHECK_FALSE(fail.holds);
  REQUIRE(fail.violating_index.has_value());
  CHECK(*fail.violating_index == 17);
  CHECK(fail.summary().find("17") != std::string::npos);
}

TEST_CASE("adaptive attacks satisfy the mean L1 bound") {
  const auto g = model_gainmap();
  SynthConfig sc;
  sc.seed = 31;
  sc.count = 3;
  for (int i = 0; i < sc.count; ++i) {
    const Triplet t = gen_triplet(sc, i).triplet;
    for (double eps : {1.0 / 255.0, 16.0 / 255.0}) {
      AttackConfig c = config(AttackMode::adaptive, eps);
      c.seed = static_cast<std::uint64_t>(i);
      const AttackResult r = pgd_attack(*g, t.shadow, c);
      const L1BoundReport rep = verify_l1_bound(r.perturbation, t.shadow, eps);
      INFO(rep.summary());
      CHECK(rep.holds);
      CHECK(rep.mean_abs <= rep.bound + 1e-9);
    }
  }
}

TEST_CASE("shape and model errors") {
  const Image img = random_image(Shape{4, 4, 3}, 1);
  CHECK_THROWS_AS(verify_l1_bound(Perturbation::zeros(Shape{4, 5, 3}), img, 0.1), ShapeError);
  CHECK_THROWS_AS(apply_perturbation(img, std::vector<double>(3, 0.0)), ShapeError);
  CHECK_THROWS_AS(pgd_attack(*model_identity(), img, config(AttackMode::uniform, 0.0)), UsageError);
}
