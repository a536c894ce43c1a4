#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gradseg/gradmap.hpp"
#include "gradseg/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gradseg;

namespace {

Volume3 permuted(const Volume3& v, const std::array<int, 3>& perm) {
  // out(i,j,k) = v at the coordinates permuted by `perm`: axis a of the output
  // walks axis perm[a] of the input
  Volume3 out = make_volume({v.shape[static_cast<std::size_t>(perm[0])],
                             v.shape[static_cast<std::size_t>(perm[1])],
                             v.shape[static_cast<std::size_t>(perm[2])]},
                            {v.spacing[static_cast<std::size_t>(perm[0])],
                             v.spacing[static_cast<std::size_t>(perm[1])],
                             v.spacing[static_cast<std::size_t>(perm[2])]});
  std::array<std::size_t, 3> c{};
  for (c[2] = 0; c[2] < out.shape[2]; ++c[2])
    for (c[1] = 0; c[1] < out.shape[1]; ++c[1])
      for (c[0] = 0; c[0] < out.shape[0]; ++c[0]) {
        std::array<std::size_t, 3> src{};
        for (int a = 0; a < 3; ++a) src[static_cast<std::size_t>(perm[a])] = c[static_cast<std::size_t>(a)];
        out.at(c[0], c[1], c[2]) = v.at(src[0], src[1], src[2]);
      }
  return out;
}

}  // namespace

TEST_CASE("gradient of a constant volume is exactly zero") {
  Volume3 v = make_volume({12, 10, 8});
  for (auto& x : v.data) x = 42.5;
  const auto g = gradmap::gradient_magnitude(v, 1.0);
  for (double x : g.data) REQUIRE(x == 0.0);
}

TEST_CASE("gradient of a linear ramp recovers the slope in the interior") {
  Volume3 v = make_volume({32, 32, 32});
  for (std::size_t k = 0; k < 32; ++k)
    for (std::size_t j = 0; j < 32; ++j)
      for (std::size_t i = 0; i < 32; ++i) v.at(i, j, k) = 0.1 * static_cast<double>(i);
  const auto g = gradmap::gradient_magnitude(v, 1.0);
  for (std::size_t k = 0; k < 32; ++k)
    for (std::size_t j = 0; j < 32; ++j)
      for (std::size_t i = 4; i <= 27; ++i)
        REQUIRE(g.at(i, j, k) == Catch::Approx(0.1).margin(1e-9));
}

TEST_CASE("step edge matches a dense 1D convolution oracle") {
  const std::size_t n = 40, step_at = 20;
  Volume3 v = make_volume({n, 9, 9});
  for (std::size_t k = 0; k < 9; ++k)
    for (std::size_t j = 0; j < 9; ++j)
      for (std::size_t i = 0; i < n; ++i) v.at(i, j, k) = i >= step_at ? 1.0 : 0.0;
  const auto g = gradmap::gradient_magnitude(v, 1.0);

  std::vector<double> line(n);
  for (std::size_t i = 0; i < n; ++i) line[i] = i >= step_at ? 1.0 : 0.0;
  const auto expected = oracle::gaussian_derivative_response_1d(line, 1.0);

  double peak = 0.0;
  std::size_t peak_at = 0;
  for (std::size_t i = 4; i < n - 4; ++i) {
    REQUIRE(g.at(i, 4, 4) == Catch::Approx(std::abs(expected[i])).margin(1e-6));
    if (g.at(i, 4, 4) > peak) {
      peak = g.at(i, 4, 4);
      peak_at = i;
    }
  }
  // response plateaus across the two face voxels
  CHECK((peak_at == step_at || peak_at == step_at - 1));
}

TEST_CASE("axis permutation of the input permutes the output bit-for-bit") {
  Rng rng(41);
  const auto v = testsup::random_volume({10, 12, 14}, rng);
  const auto g = gradmap::gradient_magnitude(v, 1.0);
  const std::array<std::array<int, 3>, 4> perms = {{{1, 0, 2}, {2, 1, 0}, {0, 2, 1}, {1, 2, 0}}};
  for (const auto& perm : perms) {
    const auto pv = permuted(v, perm);
    const auto pg = gradmap::gradient_magnitude(pv, 1.0);
    const auto expected = permuted(g, perm);
    REQUIRE(pg.shape == expected.shape);
    for (std::size_t i = 0; i < pg.data.size(); ++i) REQUIRE(pg.data[i] == expected.data[i]);
  }
}

TEST_CASE("gradient scales linearly with the input") {
  Rng rng(42);
  const auto v = testsup::random_volume({10, 10, 10}, rng);
  const auto g = gradmap::gradient_magnitude(v, 1.0);

  SECTION("power-of-two scale is exact") {
    Volume3 doubled = v;
    for (auto& x : doubled.data) x *= 2.0;
    const auto g2 = gradmap::gradient_magnitude(doubled, 1.0);
    for (std::size_t i = 0; i < g.data.size(); ++i) REQUIRE(g2.data[i] == 2.0 * g.data[i]);
  }
  SECTION("general positive scale within rounding") {
    Volume3 scaled = v;
    for (auto& x : scaled.data) x *= 1.7;
    const auto g2 = gradmap::gradient_magnitude(scaled, 1.0);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      REQUIRE(g2.data[i] == Catch::Approx(1.7 * g.data[i]).epsilon(1e-12).margin(1e-12));
  }
}

TEST_CASE("build_gradient_map: empty RoiSet gives an all-zero map") {
  Rng rng(43);
  const auto img = testsup::random_volume({16, 16, 16}, rng);
  roi::RoiSet empty;
  empty.shape = img.shape;
  empty.empty_prior_warning = true;
  const auto map = gradmap::build_gradient_map(img, empty);
  for (double x : map.data) REQUIRE(x == 0.0);
}

TEST_CASE("build_gradient_map: range and support") {
  Rng rng(44);
  for (int trial = 0; trial < 10; ++trial) {
    const auto img = testsup::random_volume({24, 20, 22}, rng);
    roi::RoiSet set;
    set.shape = img.shape;
    const int n_boxes = static_cast<int>(rng.uniform_int(1, 3));
    for (int bi = 0; bi < n_boxes; ++bi) {
      BoundingBox3 b;
      for (int a = 0; a < 3; ++a) {
        const auto lo = rng.uniform_int(0, static_cast<std::int64_t>(img.shape[a]) - 4);
        b.lo[a] = lo;
        b.hi[a] = rng.uniform_int(lo + 1, static_cast<std::int64_t>(img.shape[a]) - 1);
      }
      set.boxes.push_back(b);
    }
    const auto map = gradmap::build_gradient_map(img, set);
    const auto support = roi::rasterize(set);
    for (std::size_t n = 0; n < map.data.size(); ++n) {
      if (support.data[n] == 0) {
        REQUIRE(map.data[n] == 0.0);  // bit-zero outside the union
      } else {
        REQUIRE(map.data[n] > 0.0);
        REQUIRE(map.data[n] <= 1.0);
      }
    }
  }
}

TEST_CASE("padded-box computation equals full-volume gradient away from edges") {
  Rng rng(45);
  const auto img = testsup::random_volume({40, 40, 40}, rng);
  roi::RoiSet set;
  set.shape = img.shape;
  const BoundingBox3 box{{12, 14, 10}, {26, 27, 29}, 1};  // >= 8 voxels from every edge
  set.boxes.push_back(box);

  gradmap::GradMapConfig cfg;
  cfg.clip_scale = 10.0;  // keep everything below the clip
  const auto map = gradmap::build_gradient_map(img, set, cfg);

  const auto full = gradmap::gradient_magnitude(volume::minmax_normalize(img), 1.0);
  for (std::int64_t k = box.lo[2]; k <= box.hi[2]; ++k)
    for (std::int64_t j = box.lo[1]; j <= box.hi[1]; ++j)
      for (std::int64_t i = box.lo[0]; i <= box.hi[0]; ++i) {
        const auto a = map.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                              static_cast<std::size_t>(k));
        const auto b = full.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                               static_cast<std::size_t>(k)) / 10.0;
        REQUIRE(a == Catch::Approx(b).margin(1e-9));
      }
}

TEST_CASE("a bright ellipsoid lights up its surface, not its interior") {
  const std::size_t n = 40;
  Volume3 img = make_volume({n, n, n});
  LabelMask3 mask = make_mask({n, n, n});
  const double c = 19.5, radius = 10.0;
  Rng rng(46);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        const double d2 = (i - c) * (i - c) + (j - c) * (j - c) + (k - c) * (k - c);
        const bool inside = d2 <= radius * radius;
        img.at(i, j, k) = (inside ? 50.0 : 0.0) + 0.5 * rng.normal();
        if (inside) mask.at(i, j, k) = 1;
      }
  const auto set = roi::boxes_from_prior(mask, 7);
  const auto map = gradmap::build_gradient_map(img, set);

  const auto shell = metrics::surface_voxels(mask, 1);
  double shell_mean = 0.0;
  for (const auto& s : shell) shell_mean += map.at(s[0], s[1], s[2]);
  shell_mean /= static_cast<double>(shell.size());

  double interior_mean = 0.0;
  std::size_t interior_count = 0;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        const double d2 = (i - c) * (i - c) + (j - c) * (j - c) + (k - c) * (k - c);
        if (d2 <= (radius - 4.0) * (radius - 4.0)) {  // deep inside, away from the edge response
          interior_mean += map.at(i, j, k);
          ++interior_count;
        }
      }
  interior_mean /= static_cast<double>(interior_count);
  CHECK(shell_mean >= 3.0 * interior_mean);
}

TEST_CASE("assemble_sample") {
  Rng rng(47);
  const auto img = testsup::random_volume({20, 20, 20}, rng, 0, 100);

  SECTION("empty prior still emits a sample with a zero map") {
    const LabelMask3 prior = make_mask({20, 20, 20});
    const auto s = gradmap::assemble_sample(img, prior, "caseA", gradmap::Phase::midRT, 3);
    CHECK(s.rois.empty_prior_warning);
    for (double x : s.channel1.data) REQUIRE(x == 0.0);
    CHECK(s.channel0.size() == img.size());
  }
  SECTION("same inputs and seed give a bit-identical sample") {
    LabelMask3 prior = make_mask({20, 20, 20});
    for (std::size_t i = 8; i < 12; ++i)
      for (std::size_t j = 8; j < 12; ++j)
        for (std::size_t k = 8; k < 12; ++k) prior.at(i, j, k) = 1;
    const auto a = gradmap::assemble_sample(img, prior, "caseA", gradmap::Phase::midRT, 3);
    const auto b = gradmap::assemble_sample(img, prior, "caseA", gradmap::Phase::midRT, 3);
    REQUIRE(a.channel0.data == b.channel0.data);
    REQUIRE(a.channel1.data == b.channel1.data);
    REQUIRE(a.rois.boxes.size() == b.rois.boxes.size());
    // channel0 is the standardized image
    double mean = 0.0;
    for (double x : a.channel0.data) mean += x;
    CHECK(mean / static_cast<double>(a.channel0.size()) == Catch::Approx(0.0).margin(1e-10));
  }
  SECTION("geometry mismatch is rejected") {
    const LabelMask3 prior = make_mask({10, 10, 10});
    CHECK_THROWS_AS(gradmap::assemble_sample(img, prior, "x", gradmap::Phase::preRT, 1), error);
  }
}
