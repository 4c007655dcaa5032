#include "topgeo/model.hpp"

#include <algorithm>
#include <cmath>

#include "topgeo/errors.hpp"

namespace topgeo {

Tensor cloud_to_tensor(const PointCloud& c, bool requires_grad) {
  std::vector<double> v;
  v.reserve(static_cast<size_t>(c.n()) * 3);
  for (const auto& p : c.points) {
    v.push_back(p[0]);
    v.push_back(p[1]);
    v.push_back(p[2]);
  }
  return Tensor::leaf({c.n(), 3}, std::move(v), requires_grad);
}

PointCloud tensor_to_cloud(const Tensor& t) {
  if (t.rank() != 2 || t.dim(1) != 3)
    throw ShapeError("tensor_to_cloud: expected n x 3, got " + shape_str(t.shape()));
  PointCloud c;
  const auto& v = t.values();
  c.points.resize(static_cast<size_t>(t.dim(0)));
  for (int i = 0; i < t.dim(0); ++i)
    c.points[static_cast<size_t>(i)] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return c;
}

namespace {

Tensor relations_to_tensor(const std::vector<std::vector<Vec3>>& rel) {
  const int n = static_cast<int>(rel.size());
  const int k = n > 0 ? static_cast<int>(rel[0].size()) : 0;
  std::vector<double> v;
  v.reserve(static_cast<size_t>(n) * k * 3);
  for (const auto& row : rel)
    for (const auto& d : row) {
      v.push_back(d[0]);
      v.push_back(d[1]);
      v.push_back(d[2]);
    }
  return Tensor::leaf({n, k, 3}, std::move(v), false);
}

std::vector<int> identity_idx(int n) {
  std::vector<int> v(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = i;
  return v;
}

// Gain on the gated nearest-neighbor pathway of the displacement heads. The
// gates are zero-initialized, so displacements start at zero and early
// training only moves their final affine layer; the gain lets the gated term
// reach the scale of the local sample spacing within a short training budget.
constexpr double kGateGain = 8.0;

// Gain on the detail-anchor channels of the split basis. The per-child maps
// are zero-initialized and Adam moves each weight by at most lr per step, so
// reaching a unit coefficient within a short budget needs the basis itself to
// carry scale.
constexpr double kDetailGain = 6.0;


// First (nearest) column of a kNN cache, one index per row.
std::vector<std::vector<int>> nearest_only(const NeighborIndex& nbr) {
  std::vector<std::vector<int>> idx(nbr.indices.size());
  for (size_t i = 0; i < nbr.indices.size(); ++i) idx[i] = {nbr.indices[i][0]};
  return idx;
}

// j-th column of a kNN cache (clamped to the cached width), one index per row.
std::vector<std::vector<int>> column_only(const NeighborIndex& nbr, int j) {
  std::vector<std::vector<int>> idx(nbr.indices.size());
  for (size_t i = 0; i < nbr.indices.size(); ++i) {
    const auto& row = nbr.indices[i];
    idx[i] = {row[std::min<size_t>(static_cast<size_t>(j), row.size() - 1)]};
  }
  return idx;
}

// Per row, the cached neighbor most opposed to the nearest-neighbor direction
// (minimal inner product with it). Together with the nearest neighbor this
// spans both sides of a point's local gap structure.
std::vector<std::vector<int>> opposite_only(const NeighborIndex& nbr,
                                            const PointCloud& c) {
  std::vector<std::vector<int>> idx(nbr.indices.size());
  for (size_t i = 0; i < nbr.indices.size(); ++i) {
    const auto& row = nbr.indices[i];
    const auto& pi = c[static_cast<int>(i)];
    const auto& p0 = c[row[0]];
    int best = row[0];
    double bd = 1e300;
    for (int j : row) {
      double dot = 0.0;
      for (int t = 0; t < 3; ++t) dot += (p0[t] - pi[t]) * (c[j][t] - pi[t]);
      if (dot < bd) {
        bd = dot;
        best = j;
      }
    }
    idx[i] = {best};
  }
  return idx;
}

}  // namespace

TopGeoModel::TopGeoModel(Hyper hp, uint64_t seed) : store_(std::move(hp)) {
  Rng rng(seed);
  build_layers(&rng);
}

TopGeoModel::TopGeoModel(ParamStore store) : store_(std::move(store)) {
  build_layers(nullptr);
}

Tensor TopGeoModel::apply_mlp2(const Mlp2& p, const Tensor& x) const {
  return mlp_apply(p.fc2, relu(mlp_apply(p.fc1, x, Activation::none)), Activation::none);
}

void TopGeoModel::build_layers(Rng* rng) {
  const Hyper& hp = store_.meta();
  auto lin = [&](const std::string& name, int in, int out, bool zero = false) {
    return rng ? make_linear(store_, name, in, out, *rng, zero)
               : linear_view(store_, name);
  };
  auto mlp2 = [&](const std::string& name, int in, int hidden, int out) {
    return Mlp2{lin(name + ".fc1", in, hidden), lin(name + ".fc2", hidden, out)};
  };
  auto res = [&](const std::string& name, int in, int hidden, int out, bool zero = false) {
    return rng ? make_resmlp(store_, name, in, hidden, out, *rng, zero)
               : resmlp_view(store_, name, in != out);
  };
  auto ita = [&](const std::string& name, int code_w) {
    ItaParams p;
    p.phi = lin(name + ".phi", code_w, hp.c);
    p.psi = lin(name + ".psi", code_w, hp.c);
    p.eta = lin(name + ".eta", code_w, hp.c);
    p.gamma1 = lin(name + ".gamma.fc1", hp.c, hp.c);
    p.gamma2 = lin(name + ".gamma.fc2", hp.c, hp.c);
    return p;
  };

  // DP: three SA levels, shape code, ITA, displacement head
  const int sa_in[3] = {3 + hp.m, 3 + hp.m + hp.c1, 3 + hp.m + hp.c2};
  const int sa_out[3] = {hp.c1, hp.c2, hp.c3};
  for (int l = 0; l < 3; ++l) {
    const std::string base = "dp.sa" + std::to_string(l + 1);
    sa_lift_[l] = mlp2(base + ".lift", 3, hp.m, hp.m);
    sa_mlp_[l] = mlp2(base + ".mlp", sa_in[l], 2 * sa_out[l], sa_out[l]);
  }
  shape_code_ = res("dp.shape", hp.c1 + hp.c3, hp.c1, hp.c1);
  dp_topo_ = mlp2("dp.topo", 3, hp.m, hp.m);
  dp_ita_ = ita("dp.ita", hp.c1);
  dp_head_ = res("dp.head", hp.c, hp.c, 3, /*zero=*/true);
  dp_head_gate_ = lin("dp.head.gate", hp.c, 3, /*zero=*/true);
  dp_head_geo_ = lin("dp.head.geo", 9, 3, /*zero=*/true);

  for (int ph = 0; ph < 2; ++ph) {
    const std::string base = "up" + std::to_string(ph + 1);
    auto& u = up_[ph];
    u.xpre = mlp2(base + ".xpre", 3, hp.c, hp.c);
    u.topo = mlp2(base + ".topo", 3, hp.m, hp.m);
    u.query = res(base + ".query", 3 * hp.c, hp.c, hp.c);
    u.ita = ita(base + ".ita", hp.c);
    if (ph == 1) u.kproj = lin(base + ".kproj", 3, hp.c);
    u.upa_phi = lin(base + ".upa.phi", hp.c, hp.c);
    u.upa_psi = lin(base + ".upa.psi", hp.c, hp.c);
    u.upa_value = res(base + ".upa.value", 2 * hp.c, hp.c, hp.c);
    u.upa_xlift = lin(base + ".upa.xlift", hp.c, hp.c);
    u.upa_gamma1 = lin(base + ".upa.gamma.fc1", hp.c, hp.c);
    u.upa_gamma2 = lin(base + ".upa.gamma.fc2", hp.c, hp.c);
    u.upa_pre = lin(base + ".upa.pre", hp.c, hp.c);
    if (rng) {
      u.deconv_w = store_.add_init(base + ".upa.deconv.w", {hp.r, hp.c, hp.c}, hp.c, *rng);
      u.deconv_b = store_.add_init(base + ".upa.deconv.b", {hp.r, hp.c}, hp.c, *rng);
    } else {
      u.deconv_w = store_.at(base + ".upa.deconv.w");
      u.deconv_b = store_.at(base + ".upa.deconv.b");
    }
    u.head = res(base + ".head", hp.c, hp.c, 3, /*zero=*/true);
    u.head_gate = lin(base + ".head.gate", hp.c, 3, /*zero=*/true);
    // geometric basis width: d1/d2/d_ms plus 4 detail anchors in phase 1, 2 in
    // phase 2 (each split hands half its anchor set to each child)
    const int basis = 9 + (ph == 0 ? 12 : 6);
    if (rng) {
      u.head_geo_w = store_.add_zeros(base + ".head.geo.w", {hp.r, basis, 3});
      u.head_geo_b = store_.add_zeros(base + ".head.geo.b", {hp.r, 3});
    } else {
      u.head_geo_w = store_.at(base + ".head.geo.w");
      u.head_geo_b = store_.at(base + ".head.geo.b");
    }
  }
}

Tensor TopGeoModel::apply_ita(const ItaParams& p, const Tensor& code,
                              const TopoEmbedding& topo) const {
  const int n = code.dim(0);
  if (static_cast<int>(topo.nbr.indices.size()) != n)
    throw ShapeError("ita: code rows " + std::to_string(n) + " do not match topo rows " +
                     std::to_string(topo.nbr.indices.size()));
  const int k = topo.nbr.k;
  Tensor phi_x = mlp_apply(p.phi, code, Activation::none);
  Tensor psi_x = mlp_apply(p.psi, code, Activation::none);
  Tensor eta_x = mlp_apply(p.eta, code, Activation::none);
  // phi broadcast over the neighbor axis; psi/eta gathered at neighbor rows
  Tensor pre = add(sub(expand_mid(phi_x, k), gather_rows(psi_x, topo.nbr.indices)),
                   topo.delta);
  Tensor logits =
      mlp_apply(p.gamma2, relu(mlp_apply(p.gamma1, pre, Activation::none)), Activation::none);
  Tensor w = softmax_mid(logits);  // per-channel weights over neighbors
  Tensor val = add(gather_rows(eta_x, topo.nbr.indices), topo.delta);
  return sum_mid(mul(w, val));
}

DownResult TopGeoModel::down_preserve(const PointCloud& p) const {
  const Hyper& hp = store_.meta();
  const int n = p.n();
  if (n < 64)
    throw ShapeError("down_preserve: need at least 64 points, got " + std::to_string(n));
  if (n % 16 != 0)
    throw ShapeError("down_preserve: point count " + std::to_string(n) +
                     " not divisible by 16 (SA cascade at ratios 4 and 16)");

  // SA cascade at ratios 4, 16, N of the input resolution
  struct Level {
    PointCloud cloud;
    Tensor coords;
    Tensor features;  // undefined at level 0 (coords only)
    std::vector<int> fps_idx;
  };
  Level cur{p, cloud_to_tensor(p), Tensor(), identity_idx(n)};
  DownResult out;

  const int counts[3] = {n / 4, n / 16, 1};
  for (int l = 0; l < 3; ++l) {
    const int target = counts[l];
    if (target < 1 || (l > 0 && cur.cloud.n() % (l == 2 ? cur.cloud.n() : 4) != 0))
      throw ConfigError("set_abstraction: level " + std::to_string(l + 1) +
                        " cannot downsample " + std::to_string(cur.cloud.n()) + " to " +
                        std::to_string(target));
    std::vector<int> idx = fps(cur.cloud, target);
    PointCloud centers;
    centers.points.reserve(idx.size());
    for (int i : idx) centers.points.push_back(cur.cloud[i]);
    const int k_eff = std::min(hp.k, cur.cloud.n() - 1);
    NeighborIndex nbr = knn(centers, cur.cloud, k_eff, &idx);
    Tensor raw = relations_to_tensor(group_subtract(centers, cur.cloud, nbr));
    Tensor lifted = apply_mlp2(sa_lift_[l], raw);
    Tensor center_t = cloud_to_tensor(centers);
    std::vector<Tensor> cat{expand_mid(center_t, k_eff), lifted};
    if (cur.features.defined()) cat.push_back(gather_rows(cur.features, nbr.indices));
    Tensor g = concat_lastdim(cat);
    Tensor f = relu(mlp_apply(sa_mlp_[l].fc2,
                              relu(mlp_apply(sa_mlp_[l].fc1, g, Activation::none)),
                              Activation::none));
    Tensor pooled = maxpool_neighbors(f);  // target x width

    if (l == 0) {
      out.sampled = center_t;
      out.fps_idx = idx;
      out.features = pooled;
    }
    cur = Level{std::move(centers), center_t, pooled, std::move(idx)};
  }
  out.global_code = cur.features;  // 1 x c3

  const int n4 = n / 4;
  out.shape_code = resmlp_apply(
      shape_code_, concat_lastdim({out.features, broadcast_rows(out.global_code, n4)}));

  // topological embedding over the sampled set for ITA
  PointCloud pd = tensor_to_cloud(out.sampled);
  const int kt = std::min(hp.k, n4 - 1);
  std::vector<int> self = identity_idx(n4);
  TopoEmbedding topo;
  topo.nbr = knn(pd, pd, kt, &self);
  topo.raw = relations_to_tensor(group_subtract(pd, pd, topo.nbr));
  topo.delta = apply_mlp2(dp_topo_, topo.raw);

  Tensor h_d = apply_ita(dp_ita_, out.shape_code, topo);
  // geometric displacement basis: offset to the nearest sampled neighbor
  // (surface-tangent, scaled to the sample spacing) and the mean-shift vector
  // toward the centroid of the k nearest original points (points at the
  // squared-error-optimal cell position)
  Tensor d1 = sub(sum_mid(gather_rows(out.sampled, nearest_only(topo.nbr))),
                  out.sampled);
  Tensor d2 = sub(sum_mid(gather_rows(out.sampled, opposite_only(topo.nbr, pd))),
                  out.sampled);
  std::vector<int> sampled_self = out.fps_idx;
  const int k_ms = std::min(hp.k, n - 1);
  NeighborIndex ms_nbr = knn(pd, p, k_ms, &sampled_self);
  Tensor p_t = cloud_to_tensor(p);
  Tensor d_ms = sub(scale(sum_mid(gather_rows(p_t, ms_nbr.indices)), 1.0 / k_ms),
                    out.sampled);
  // detail anchors: offsets to the 4 nearest original points, handed to the
  // UP phases so each child slot can target a distinct nearby original point
  std::vector<Tensor> anchors;
  for (int j = 0; j < 4; ++j)
    anchors.push_back(
        sub(sum_mid(gather_rows(p_t, column_only(ms_nbr, j))), out.sampled));
  out.detail = concat_lastdim(anchors);
  Tensor gate = scale(mlp_apply(dp_head_gate_, h_d, Activation::none), kGateGain);
  Tensor geo = mlp_apply(dp_head_geo_, concat_lastdim({d1, d2, d_ms}), Activation::none);
  out.k0 = add(add(resmlp_apply(dp_head_, h_d), mul(gate, d1)), geo);
  Tensor disp0 = tanh_op(out.k0);
  out.r0 = add(out.sampled, disp0);
  // re-anchor the detail offsets against the displaced points (see up_preserve)
  out.detail = sub(out.detail, concat_lastdim({disp0, disp0, disp0, disp0}));
  return out;
}

UpResult TopGeoModel::up_preserve(const Tensor& p_pre, const Tensor* k_prev,
                                  int phase, const Tensor* detail) const {
  const Hyper& hp = store_.meta();
  if (phase != 1 && phase != 2) throw ConfigError("up_preserve: phase must be 1 or 2");
  if (phase == 2 && !k_prev) throw ShapeError("up_preserve: phase 2 requires k_prev");
  const auto& u = up_[phase - 1];
  const int n = p_pre.dim(0);
  if (n < 4)
    throw ShapeError("up_preserve: need at least 4 points for interpolation, got " +
                     std::to_string(n));
  if (k_prev && k_prev->dim(0) != n)
    throw ShapeError("up_preserve: k_prev rows " + std::to_string(k_prev->dim(0)) +
                     " do not match input rows " + std::to_string(n));

  const PointCloud cloud = tensor_to_cloud(p_pre);
  std::vector<int> self = identity_idx(n);

  Tensor x_pre = apply_mlp2(u.xpre, p_pre);  // n x c

  // upsampling feature: inverse-distance interpolation over 3 neighbors
  NeighborIndex nbr3 = knn(cloud, cloud, 3, &self);
  Tensor diff3 = sub(expand_mid(p_pre, 3), gather_rows(p_pre, nbr3.indices));
  Tensor dist3 = sqrt_op(sum_lastdim(mul(diff3, diff3)));
  Tensor w3 = reciprocal(add_scalar(dist3, 1e-8));
  Tensor num = sum_mid(mul(expand_lastdim(w3, hp.c), gather_rows(x_pre, nbr3.indices)));
  Tensor x_u = mul(num, expand_cols(reciprocal(sum_lastdim(w3)), hp.c));

  // query: Max(X_pre) substitutes the 2D shape code, then ITA enhances Q
  Tensor q0 = resmlp_apply(
      u.query, concat_lastdim({x_u, broadcast_rows(max_rows(x_pre), n), x_pre}));

  // fresh per-phase topological embedding; its kNN cache is reused by UPA
  const int kt = std::min(hp.k, n - 1);
  TopoEmbedding topo;
  topo.nbr = knn(cloud, cloud, kt, &self);
  topo.raw = sub(expand_mid(p_pre, kt), gather_rows(p_pre, topo.nbr.indices));
  topo.delta = apply_mlp2(u.topo, topo.raw);

  Tensor q = apply_ita(u.ita, q0, topo);
  Tensor key = phase == 2 ? mlp_apply(*u.kproj, *k_prev, Activation::none) : q;

  // UPA: neighbor vector attention, then stride-r point splitting
  Tensor pre = add(sub(expand_mid(mlp_apply(u.upa_phi, q, Activation::none), kt),
                       gather_rows(mlp_apply(u.upa_psi, key, Activation::none),
                                   topo.nbr.indices)),
                   topo.delta);
  Tensor logits = mlp_apply(u.upa_gamma2, relu(mlp_apply(u.upa_gamma1, pre, Activation::none)),
                            Activation::none);
  Tensor w = softmax_mid(logits);
  Tensor v = resmlp_apply(u.upa_value, concat_lastdim({q, key}));
  Tensor lifted_xu = mlp_apply(u.upa_xlift, x_u, Activation::none);
  Tensor val = add(add(gather_rows(v, topo.nbr.indices), topo.delta),
                   expand_mid(lifted_xu, kt));
  Tensor a = sum_mid(mul(w, val));
  Tensor h_u = point_split_deconv(relu(mlp_apply(u.upa_pre, a, Activation::none)),
                                  u.deconv_w, u.deconv_b, hp.r);

  UpResult out;
  // geometric displacement basis per parent: nearest-neighbor offset (tangent,
  // spacing-scaled) and mean-shift vector over the kt neighbors. Each child
  // slot applies its own learned linear map of the basis, so the split into
  // gap-tiling children is a few shared parameters; the gated and free MLP
  // terms modulate per point.
  Tensor d1 = sub(sum_mid(gather_rows(p_pre, nearest_only(topo.nbr))), p_pre);
  Tensor d2 = sub(sum_mid(gather_rows(p_pre, opposite_only(topo.nbr, cloud))), p_pre);
  Tensor d_ms = sub(scale(sum_mid(gather_rows(p_pre, topo.nbr.indices)), 1.0 / kt),
                    p_pre);
  // detail anchors: offsets handed down from the conditioning cloud (4 anchors
  // in phase 1, 2 in phase 2), or this phase's own nearest-neighbor offsets
  // when upsampling a bare cloud
  const int n_anchor = phase == 1 ? 4 : 2;
  Tensor det;
  if (detail) {
    det = *detail;
  } else {
    std::vector<Tensor> anchors;
    for (int j = 0; j < n_anchor; ++j)
      anchors.push_back(
          sub(sum_mid(gather_rows(p_pre, column_only(topo.nbr, j))), p_pre));
    det = concat_lastdim(anchors);
  }
  Tensor split = point_split_deconv(
      concat_lastdim({d1, d2, d_ms, scale(det, kDetailGain)}), u.head_geo_w,
      u.head_geo_b, hp.r);
  Tensor gate = scale(mlp_apply(u.head_gate, h_u, Activation::none), kGateGain);
  out.k = add(add(resmlp_apply(u.head, h_u), mul(gate, repeat_rows(d1, hp.r))), split);
  Tensor disp = tanh_op(out.k);
  out.r = add(repeat_rows(p_pre, hp.r), disp);
  if (phase == 1) {
    // split the anchor set between the children — child 0 inherits anchors
    // {0, 1}, child 1 inherits {2, 3} — and re-anchor against the displaced
    // children so phase 2 sees offsets from where its input points actually
    // are. With this partition each of the four grandchildren can target a
    // distinct anchor through fixed per-child maps.
    auto selector = [](std::initializer_list<int> blocks) {
      std::vector<double> m(12 * 6, 0.0);
      int col = 0;
      for (int blk : blocks) {
        for (int t = 0; t < 3; ++t) m[(3 * blk + t) * 6 + col * 3 + t] = 1.0;
        ++col;
      }
      return Tensor::leaf({12, 6}, std::move(m), false);
    };
    Tensor det_a = matmul(det, selector({0, 1}));
    Tensor det_b = matmul(det, selector({2, 3}));
    std::vector<double> mv(static_cast<size_t>(2 * n) * 6, 0.0);
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < 6; ++t) mv[(2 * i) * 6 + t] = 1.0;
    Tensor mask = Tensor::leaf({2 * n, 6}, std::move(mv), false);
    Tensor inherited = add(mul(mask, repeat_rows(det_a, hp.r)),
                           mul(add_scalar(scale(mask, -1.0), 1.0),
                               repeat_rows(det_b, hp.r)));
    out.detail = sub(inherited, concat_lastdim({disp, disp}));
  }
  return out;
}

RecoveryResult TopGeoModel::recover(const PointCloud& p) const {
  DownResult down = down_preserve(p);
  UpResult u1 = up_preserve(down.r0, nullptr, 1, &down.detail);
  UpResult u2 = up_preserve(u1.r, &u1.k, 2, &u1.detail);
  RecoveryResult out;
  out.r0 = down.r0;
  out.r1 = u1.r;
  out.r2 = u2.r;
  out.k0 = down.k0;
  out.k1 = u1.k;
  out.k2 = u2.k;
  return out;
}

Tensor TopGeoModel::upsample_only(const PointCloud& p_sparse) const {
  if (p_sparse.n() < 17)
    throw ShapeError("upsample_only: need at least 17 points, got " +
                     std::to_string(p_sparse.n()));
  Tensor p = cloud_to_tensor(p_sparse);
  UpResult u1 = up_preserve(p, nullptr, 1);
  UpResult u2 = up_preserve(u1.r, &u1.k, 2);
  return u2.r;
}

}  // namespace topgeo
