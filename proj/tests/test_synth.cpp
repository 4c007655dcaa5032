#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "topgeo/errors.hpp"
#include "topgeo/synth.hpp"

using namespace topgeo;

namespace {

std::vector<double> nn_distances(const PointCloud& c) {
  std::vector<double> out;
  for (int i = 0; i < c.n(); ++i) {
    double best = 1e300;
    for (int j = 0; j < c.n(); ++j)
      if (j != i) best = std::min(best, dist(c[i], c[j]));
    out.push_back(best);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// two-sample Kolmogorov-Smirnov statistic over sorted samples
double ks_statistic(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i;
    else ++j;
    const double fa = double(i) / double(a.size());
    const double fb = double(j) / double(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace

TEST_CASE("gen_shape determinism and normalization") {
  ShapeSpec spec;
  spec.kind = ShapeKind::sphere;
  spec.n = 256;
  spec.seed = 42;
  const PointCloud a = gen_shape(spec);
  const PointCloud b = gen_shape(spec);
  REQUIRE(a.n() == 256);
  CHECK(a.points == b.points);  // bit identical

  double maxd = 0;
  for (const auto& p : a.points)
    maxd = std::max(maxd, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  CHECK(maxd == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("torus points sit on the analytic surface before normalization") {
  ShapeSpec spec;
  spec.kind = ShapeKind::torus;
  spec.n = 256;
  spec.seed = 3;
  const PointCloud raw = gen_shape_raw(spec);
  for (const auto& p : raw.points) {
    const double ring = std::sqrt(p[0] * p[0] + p[1] * p[1]);
    const double d = std::sqrt((ring - 1.0) * (ring - 1.0) + p[2] * p[2]);
    CHECK(std::abs(d - 0.3) < 1e-9);
  }
}

TEST_CASE("apply_regime contracts") {
  ShapeSpec spec;
  spec.kind = ShapeKind::cylinder;
  spec.n = 512;
  spec.seed = 8;
  const PointCloud source = gen_shape(spec);

  Rng rng(19);
  for (Regime r : {Regime::uniform, Regime::random, Regime::partial}) {
    const PointCloud out = apply_regime(source, r, 128, rng);
    REQUIRE(out.n() == 128);
    CHECK(out.n() % 4 == 0);
    // every output point is one of the source points
    for (const auto& p : out.points)
      CHECK(std::find(source.points.begin(), source.points.end(), p) !=
            source.points.end());
  }

  PointCloud tiny;
  tiny.points = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(apply_regime(tiny, Regime::uniform, 128, rng), ShapeError);
}

TEST_CASE("uniform regime preserves the nearest-neighbor distance distribution") {
  // KS two-sample test at alpha = 0.01 over 50 trials; expect ~0.5 rejections
  const double crit = 1.628;  // c(0.01)
  int rejections = 0;
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    ShapeSpec big;
    big.kind = ShapeKind::sphere;
    big.n = 1024;
    big.seed = 1000 + trial;
    const PointCloud sampled = apply_regime(gen_shape(big), Regime::uniform, 256, rng);

    ShapeSpec direct;
    direct.kind = ShapeKind::sphere;
    direct.n = 256;
    direct.seed = 5000 + trial;
    const std::vector<double> a = nn_distances(sampled);
    const std::vector<double> b = nn_distances(gen_shape(direct));
    const double d = ks_statistic(a, b);
    const double thresh =
        crit * std::sqrt(double(a.size() + b.size()) / double(a.size() * b.size()));
    if (d > thresh) ++rejections;
  }
  CHECK(rejections <= 4);
}

TEST_CASE("augment preserves count and normalization") {
  ShapeSpec spec;
  spec.kind = ShapeKind::helix;
  spec.n = 128;
  spec.seed = 77;
  const PointCloud base = gen_shape(spec);
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    const PointCloud aug = augment(base, rng);
    REQUIRE(aug.n() == base.n());
    double maxd = 0;
    for (const auto& p : aug.points)
      maxd = std::max(maxd, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
    CHECK(maxd == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("pure scaling is absorbed by renormalization") {
  ShapeSpec spec;
  spec.kind = ShapeKind::box_surface;
  spec.n = 128;
  spec.seed = 5;
  const PointCloud base = gen_shape(spec);
  PointCloud scaled = base;
  for (auto& p : scaled.points)
    for (int d = 0; d < 3; ++d) p[d] *= 1.2;
  auto [renorm, rec] = normalize_unit_sphere(scaled);
  for (int i = 0; i < base.n(); ++i)
    for (int d = 0; d < 3; ++d) CHECK(std::abs(renorm[i][d] - base[i][d]) < 1e-12);
}

TEST_CASE("manifest round trip") {
  const std::vector<ManifestEntry> entries = {
      {ShapeKind::sphere, 1, Regime::uniform, 256},
      {ShapeKind::torus, 99, Regime::partial, 64},
      {ShapeKind::two_planes_with_hole, 7, Regime::random, 128},
  };
  const std::string path =
      (std::filesystem::temp_directory_path() / "topgeo_manifest_test.txt").string();
  save_manifest(path, entries);
  const auto loaded = load_manifest(path);
  REQUIRE(loaded.size() == entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    CHECK(loaded[i].kind == entries[i].kind);
    CHECK(loaded[i].seed == entries[i].seed);
    CHECK(loaded[i].regime == entries[i].regime);
    CHECK(loaded[i].n == entries[i].n);
  }
  std::filesystem::remove(path);

  CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.txt"), DataError);

  // realize_entry emits a normalized cloud of the requested size
  const PointCloud c = realize_entry(entries[1]);
  CHECK(c.n() == 64);
}
