#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "topgeo/errors.hpp"
#include "topgeo/metrics.hpp"
#include "topgeo/model.hpp"
#include "topgeo/synth.hpp"

using namespace topgeo;

namespace {

Hyper tiny_hyper() {
  Hyper hp;
  hp.n = 64;
  hp.k = 8;
  hp.c1 = 8;
  hp.c2 = 12;
  hp.c3 = 16;
  hp.c = 8;
  hp.m = 8;
  return hp;
}

PointCloud shape_cloud(int n, uint64_t seed, ShapeKind kind = ShapeKind::torus) {
  ShapeSpec spec;
  spec.kind = kind;
  spec.n = n;
  spec.seed = seed;
  return gen_shape(spec);
}

std::vector<Vec3> sorted_points(const PointCloud& c) {
  std::vector<Vec3> v = c.points;
  std::sort(v.begin(), v.end());
  return v;
}

// multiset distance: max over points of nearest-neighbor distance, both ways
double multiset_gap(const PointCloud& a, const PointCloud& b) {
  double worst = 0;
  for (const auto& x : a.points) {
    double best = 1e300;
    for (const auto& y : b.points) best = std::min(best, dist(x, y));
    worst = std::max(worst, best);
  }
  for (const auto& y : b.points) {
    double best = 1e300;
    for (const auto& x : a.points) best = std::min(best, dist(x, y));
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

TEST_CASE("recover cardinalities") {
  TopGeoModel model(tiny_hyper(), 1);
  for (int n : {64, 256}) {
    const RecoveryResult rec = model.recover(shape_cloud(n, 3));
    CHECK(rec.r0.dim(0) == n / 4);
    CHECK(rec.r1.dim(0) == n / 2);
    CHECK(rec.r2.dim(0) == n);
    CHECK(rec.r1.dim(0) == 2 * rec.r0.dim(0));
    CHECK(rec.r2.dim(0) == 2 * rec.r1.dim(0));
  }
}

TEST_CASE("recover input validation") {
  TopGeoModel model(tiny_hyper(), 1);
  CHECK_THROWS_AS(model.recover(shape_cloud(60, 3)), ShapeError);  // below 64
  PointCloud c96 = shape_cloud(256, 4);
  c96.points.resize(96);  // divisible by 16, >= 64: valid
  CHECK_NOTHROW(model.recover(c96));
  PointCloud c100 = shape_cloud(256, 4);
  c100.points.resize(100);  // not divisible by 16: SA cascade cannot tile it
  CHECK_THROWS_AS(model.recover(c100), ShapeError);
}

TEST_CASE("zero-initialized heads reproduce FPS exactly") {
  TopGeoModel model(tiny_hyper(), 5);
  const PointCloud cloud = shape_cloud(64, 9);
  const RecoveryResult rec = model.recover(cloud);

  const std::vector<int> idx = fps(cloud, 16);
  PointCloud r0 = tensor_to_cloud(rec.r0);
  for (int i = 0; i < 16; ++i)
    for (int d = 0; d < 3; ++d) CHECK(r0[i][d] == cloud[idx[size_t(i)]][d]);

  // r2 is each FPS point exactly quadrupled
  PointCloud r2 = tensor_to_cloud(rec.r2);
  PointCloud expect;
  for (int i = 0; i < 16; ++i)
    for (int rep = 0; rep < 4; ++rep) expect.points.push_back(cloud[idx[size_t(i)]]);
  CHECK(sorted_points(r2) == sorted_points(expect));
}

TEST_CASE("displacements stay inside the tanh bound") {
  TopGeoModel model(tiny_hyper(), 5);
  // make the heads nonzero so displacements are live
  Rng rng(99);
  for (auto& [name, t] : model.params().entries())
    for (double& v : t.mutable_values())
      if (v == 0.0) v = rng.uniform(-2.0, 2.0);

  const PointCloud cloud = shape_cloud(64, 9);
  const DownResult d = model.down_preserve(cloud);
  const PointCloud r0 = tensor_to_cloud(d.r0);
  const PointCloud base = tensor_to_cloud(d.sampled);
  for (int i = 0; i < r0.n(); ++i) {
    for (int dd = 0; dd < 3; ++dd) CHECK(std::abs(r0[i][dd] - base[i][dd]) < 1.0);
    CHECK(dist(r0[i], base[i]) <= std::sqrt(3.0));
  }
}

TEST_CASE("down_preserve shapes") {
  const Hyper hp = tiny_hyper();
  TopGeoModel model(hp, 2);
  const DownResult d = model.down_preserve(shape_cloud(64, 1));
  CHECK(d.features.shape() == Shape{16, hp.c1});
  CHECK(d.shape_code.shape() == Shape{16, hp.c1});
  CHECK(d.global_code.shape() == Shape{1, hp.c3});
  CHECK(d.r0.shape() == Shape{16, 3});
  CHECK(d.k0.shape() == Shape{16, 3});
}

TEST_CASE("recovery is permutation invariant as a multiset") {
  TopGeoModel model(tiny_hyper(), 7);
  Rng rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    const PointCloud cloud = shape_cloud(64, 100 + trial);
    const RecoveryResult base = model.recover(cloud);
    const PointCloud b0 = tensor_to_cloud(base.r0);
    const PointCloud b2 = tensor_to_cloud(base.r2);

    std::vector<int> perm(64);
    for (int i = 0; i < 64; ++i) perm[size_t(i)] = i;
    for (int rep = 0; rep < 3; ++rep) {
      for (int i = 63; i > 0; --i)
        std::swap(perm[size_t(i)], perm[size_t(rng.uniform_int(i + 1))]);
      PointCloud shuffled;
      for (int i : perm) shuffled.points.push_back(cloud[i]);
      const RecoveryResult got = model.recover(shuffled);
      CHECK(multiset_gap(tensor_to_cloud(got.r0), b0) < 1e-6);
      CHECK(multiset_gap(tensor_to_cloud(got.r2), b2) < 1e-6);
    }
  }
}

TEST_CASE("upsample_only") {
  TopGeoModel model(tiny_hyper(), 3);
  PointCloud sparse = shape_cloud(64, 2);
  sparse.points.resize(20);
  const Tensor up = model.upsample_only(sparse);
  CHECK(up.shape() == Shape{80, 3});

  // zero heads: every input point appears exactly 4 times
  PointCloud expect;
  for (const auto& p : sparse.points)
    for (int rep = 0; rep < 4; ++rep) expect.points.push_back(p);
  CHECK(sorted_points(tensor_to_cloud(up)) == sorted_points(expect));

  PointCloud few = sparse;
  few.points.resize(16);
  CHECK_THROWS_AS(model.upsample_only(few), ShapeError);
}

TEST_CASE("checkpoint naming covers dp and up prefixes") {
  TopGeoModel model(tiny_hyper(), 1);
  bool has_dp = false, has_up1 = false, has_up2 = false;
  for (const auto& [name, t] : model.params().entries()) {
    has_dp |= name.rfind("dp.", 0) == 0;
    has_up1 |= name.rfind("up1.", 0) == 0;
    has_up2 |= name.rfind("up2.", 0) == 0;
  }
  CHECK(has_dp);
  CHECK(has_up1);
  CHECK(has_up2);
}

TEST_CASE("gradient flows from the loss into encoder parameters") {
  TopGeoModel model(tiny_hyper(), 13);
  // live heads so every path carries gradient
  Rng rng(5);
  for (auto& [name, t] : model.params().entries())
    for (double& v : t.mutable_values())
      if (v == 0.0) v = rng.uniform(-0.1, 0.1);

  const PointCloud cloud = shape_cloud(64, 21);
  model.params().zero_grad();
  const RecoveryResult rec = model.recover(cloud);
  const Tensor gt = cloud_to_tensor(cloud);
  backward(add(scale(geometry_loss(rec.r0, rec.r1, rec.r2, gt), 1000.0),
               topo_constraint_loss(rec.k0, rec.k1, rec.k2)));

  double dp_norm = 0, up_norm = 0;
  for (const auto& [name, t] : model.params().entries()) {
    const auto& node = *t.node();
    if (node.grad.empty()) continue;
    double s = 0;
    for (double g : node.grad) s += g * g;
    if (name.rfind("dp.", 0) == 0) dp_norm += s;
    else up_norm += s;
  }
  CHECK(dp_norm > 0.0);
  CHECK(up_norm > 0.0);
}
