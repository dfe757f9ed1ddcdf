#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "shadowstorm/error.hpp"
#include "shadowstorm/metrics.hpp"
#include "shadowstorm/pnm.hpp"
#include "shadowstorm/synthdata.hpp"
#include "test_util.hpp"

using namespace shadowstorm;
using testutil::TempDir;

namespace {

double masked_mean(const Image& img, const ShadowMask& m, bool shadow) {
  double acc = 0.0;
  std::size_t n = 0;
  const Shape s = img.shape();
  for (int r = 0; r < s.height; ++r)
    for (int c = 0; c < s.width; ++c) {
      if ((m.at(r, c) == 1) != shadow) continue;
      for (int ch = 0; ch < s.channels; ++ch) acc += img.at(r, c, ch);
      n += s.channels;
    }
  return acc / n;
}

}  // namespace

TEST_CASE("config validation") {
  SynthConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto edit) {
    SynthConfig c;
    edit(c);
    CHECK_THROWS_AS(c.validate(), UsageError);
  };
  bad([](SynthConfig& c) { c.count = 0; });
  bad([](SynthConfig& c) { c.height = 31; });
  bad([](SynthConfig& c) { c.k_min = 0.8; c.k_max = 0.4; });
  bad([](SynthConfig& c) { c.k_max = 1.0; });
  bad([](SynthConfig& c) { c.area_min = 0.0; });
  bad([](SynthConfig& c) { c.area_min = 0.5; c.area_max = 0.5; });
  bad([](SynthConfig& c) { c.blur_radius = -1; });
  CHECK_THROWS_AS(gen_triplet(c, 1), UsageError);
}

TEST_CASE("attenuation of a hard mask") {
  const Image base = Image::filled(Shape{2, 2, 3}, 0.6);
  const ShadowMask m(2, 2, {1, 0, 0, 1});
  const std::vector<double> soft = soften_mask(m, 0);
  CHECK(soft == std::vector<double>{1.0, 0.0, 0.0, 1.0});
  const Image out = attenuate(base, soft, 0.5);
  CHECK(out.at(0, 0, 1) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(out.at(0, 1, 2) == 0.6);
  CHECK_THROWS_AS(attenuate(base, std::vector<double>(3, 0.0), 0.5), ShapeError);
}

TEST_CASE("softened mask stays in [0, 1] and is flat far from edges") {
  std::vector<std::uint8_t> d(20 * 20, 0);
  for (int r = 5; r < 15; ++r)
    for (int c = 5; c < 15; ++c) d[r * 20 + c] = 1;
  const ShadowMask m(20, 20, d);
  const auto soft = soften_mask(m, 2);
  for (double v : soft) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(soft[10 * 20 + 10] == 1.0);
  CHECK(soft[0] == 0.0);
  CHECK(soft[5 * 20 + 5] > 0.0);
  CHECK(soft[5 * 20 + 5] < 1.0);
}

TEST_CASE("triplet invariants") {
  SynthConfig c;
  c.seed = 21;
  c.count = 12;
  std::set<double> ks;
  for (int i = 0; i < c.count; ++i) {
    const GeneratedTriplet g = gen_triplet(c, i);
    const Triplet& t = g.triplet;
    const Shape s = t.shadow.shape();
    REQUIRE(s == Shape{64, 64, 3});
    REQUIRE(t.shadow_free.shape() == s);
    REQUIRE(t.mask.matches(s));
    CHECK(g.info.k >= c.k_min);
    CHECK(g.info.k <= c.k_max);
    ks.insert(g.info.k);
    const double area = static_cast<double>(t.mask.shadow_count()) / t.mask.size();
    CHECK(area == doctest::Approx(g.info.area_fraction).epsilon(1e-12));
    CHECK(area >= c.area_min);
    CHECK(area <= c.area_max);

    const auto soft = soften_mask(t.mask, c.blur_radius);
    for (int r = 0; r < s.height; ++r)
      for (int col = 0; col < s.width; ++col) {
        const double sm = soft[static_cast<std::size_t>(r) * s.width + col];
        for (int ch = 0; ch < s.channels; ++ch) {
          const double a = t.shadow.at(r, col, ch), b = t.shadow_free.at(r, col, ch);
          CHECK(b >= 0.15);
          CHECK(b <= 0.95);
          if (sm == 0.0) REQUIRE(a == b);
          if (t.mask.at(r, col)) REQUIRE(a <= b);
        }
      }
    CHECK(masked_mean(t.shadow, t.mask, true) < masked_mean(t.shadow, t.mask, false));
  }
  CHECK(ks.size() == static_cast<std::size_t>(c.count));
}

TEST_CASE("triplets depend only on seed and index") {
  SynthConfig a;
  a.seed = 5;
  a.count = 3;
  SynthConfig b = a;
  b.count = 10;
  const Triplet x = gen_triplet(a, 2).triplet, y = gen_triplet(b, 2).triplet;
  CHECK(x.shadow.data()[0] == y.shadow.data()[0]);
  CHECK(encode_pnm(x.shadow) == encode_pnm(y.shadow));
  CHECK(encode_pnm(x.shadow_free) == encode_pnm(y.shadow_free));
  CHECK(gen_triplet(a, 2).info.seed == triplet_seed(5, 2));
  CHECK(triplet_seed(5, 2) != triplet_seed(5, 1));
  CHECK(triplet_seed(5, 2) != triplet_seed(6, 2));
}

TEST_CASE("stronger attenuation darkens the shadow region") {
  SynthConfig c;
  c.seed = 8;
  c.count = 4;
  for (int i = 0; i < c.count; ++i) {
    const Triplet t = gen_triplet(c, i).triplet;
    const auto soft = soften_mask(t.mask, c.blur_radius);
    double prev = masked_mean(attenuate(t.shadow_free, soft, 0.1), t.mask, true);
    for (double k : {0.3, 0.5, 0.7, 0.9}) {
      const double cur = masked_mean(attenuate(t.shadow_free, soft, k), t.mask, true);
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("unsatisfiable area range is an error") {
  SynthConfig c;
  c.height = c.width = 32;
  c.area_min = 0.97;
  c.area_max = 0.98;
  CHECK_THROWS_AS(gen_triplet(c, 0), UsageError);
}

TEST_CASE("dataset files, manifest and reload") {
  TempDir dir("synth");
  SynthConfig c;
  c.seed = 3;
  c.count = 4;
  const auto infos = gen_dataset(c, dir.path());
  REQUIRE(infos.size() == 4);

  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    (void)e;
    ++files;
  }
  CHECK(files == 13);
  for (const char* name : {"shadow_0000.ppm", "mask_0003.pgm", "free_0002.ppm", kManifestName}) {
    CHECK(std::filesystem::exists(dir / name));
  }

  const auto rows = read_manifest(dir / kManifestName);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].index == static_cast<int>(i));
    CHECK(rows[i].k >= c.k_min);
    CHECK(rows[i].k <= c.k_max);
    CHECK(rows[i].k == doctest::Approx(infos[i].k).epsilon(1e-9));
    CHECK(rows[i].seed == infos[i].seed);
  }

  const auto loaded = load_triplet_dir(dir.path());
  REQUIRE(loaded.size() == 4);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const Triplet g = gen_triplet(c, static_cast<int>(i)).triplet;
    const Triplet& l = loaded[i].triplet;
    CHECK(loaded[i].index == static_cast<int>(i));
    CHECK(encode_pnm(l.shadow) == encode_pnm(g.shadow));
    CHECK(encode_pnm(l.shadow_free) == encode_pnm(g.shadow_free));
    CHECK(std::equal(l.mask.data().begin(), l.mask.data().end(), g.mask.data().begin()));
    for (std::size_t j = 0; j < g.shadow.size(); ++j) REQUIRE(std::fabs(l.shadow[j] - g.shadow[j]) <= 0.5 / 255.0 + 1e-12);
  }

  TempDir again("synth");
  gen_dataset(c, again.path());
  for (const char* name : {"shadow_0001.ppm", "mask_0001.pgm", "free_0001.ppm", kManifestName}) {
    CHECK(testutil::slurp(dir / name) == testutil::slurp(again / name));
  }
}

TEST_CASE("loader errors and degenerate directories") {
  TempDir empty("empty");
  CHECK(load_triplet_dir(empty.path()).empty());
  CHECK_THROWS_AS(load_triplet_dir(empty / "nope"), IoError);

  TempDir orphan("orphan");
  SynthConfig c;
  c.count = 1;
  const Triplet t = gen_triplet(c, 0).triplet;
  save_mask(t.mask, orphan / "mask_0007.pgm");
  try {
    load_triplet_dir(orphan.path());
    FAIL("orphan mask accepted");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("missing shadow_0007") != std::string::npos);
  }

  TempDir mismatch("mismatch");
  save_pnm(t.shadow, mismatch / "shadow_0002.ppm");
  save_mask(t.mask, mismatch / "mask_0002.pgm");
  save_pnm(Image::filled(Shape{32, 32, 3}, 0.5), mismatch / "free_0002.ppm");
  try {
    load_triplet_dir(mismatch.path());
    FAIL("shape mismatch accepted");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("triplet 2") != std::string::npos);
  }
}
