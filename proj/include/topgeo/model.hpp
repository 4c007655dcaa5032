#pragma once

#include <optional>
#include <string>

#include "topgeo/geometry.hpp"
#include "topgeo/params.hpp"
#include "topgeo/tensor.hpp"

namespace topgeo {

Tensor cloud_to_tensor(const PointCloud& c, bool requires_grad = false);
PointCloud tensor_to_cloud(const Tensor& t);

// Lifted pairwise differences over a neighbor cache.
struct TopoEmbedding {
  Tensor raw;    // n x k x 3 subtraction relations
  Tensor delta;  // n x k x c after the MLP lift
  NeighborIndex nbr;
};

struct DownResult {
  Tensor r0;          // n/4 x 3, differentiable sampled cloud
  Tensor k0;          // n/4 x 3, pre-tanh displacement features
  Tensor detail;      // n/4 x 12, offsets to the 4 nearest original points
  Tensor sampled;     // n/4 x 3, the FPS points P_d (constant)
  std::vector<int> fps_idx;
  Tensor features;    // n/4 x c1, X_d
  Tensor shape_code;  // n/4 x c1, S
  Tensor global_code; // 1 x c3, s
};

struct UpResult {
  Tensor r;       // (2n) x 3
  Tensor k;       // (2n) x 3 pre-tanh features
  Tensor detail;  // (2n) x 12, re-anchored detail offsets for the next phase
};

struct RecoveryResult {
  Tensor r0, r1, r2;
  Tensor k0, k1, k2;
};

class TopGeoModel {
 public:
  // fresh Kaiming-initialized parameters; displacement heads start at zero
  TopGeoModel(Hyper hp, uint64_t seed);
  // wrap an existing parameter store (e.g. a loaded checkpoint)
  explicit TopGeoModel(ParamStore store);

  const Hyper& hyper() const { return store_.meta(); }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Down-Preservation: SA cascade, shape code, ITA, displacement head.
  DownResult down_preserve(const PointCloud& p) const;

  // One Up-Preservation phase; phase is 1 or 2, k_prev required for phase 2.
  // detail optionally carries 4-anchor offsets from the conditioning cloud;
  // when absent the phase derives anchors from its own neighborhoods.
  UpResult up_preserve(const Tensor& p_pre, const Tensor* k_prev, int phase,
                       const Tensor* detail = nullptr) const;

  // Full pipeline. Nothing but r0 itself crosses from the DP phase into UP.
  RecoveryResult recover(const PointCloud& p) const;

  // Two UP phases on an externally supplied sparse cloud (no DP); 4x output.
  Tensor upsample_only(const PointCloud& p_sparse) const;

 private:
  struct ItaParams {
    LinearParams phi, psi, eta;
    LinearParams gamma1, gamma2;
  };
  struct Mlp2 {
    LinearParams fc1, fc2;
  };

  Tensor apply_mlp2(const Mlp2& p, const Tensor& x) const;  // fc2(relu(fc1 x))
  Tensor apply_ita(const ItaParams& p, const Tensor& code, const TopoEmbedding& topo) const;

  void build_layers(Rng* rng);  // rng == nullptr -> view existing store entries

  ParamStore store_;

  Mlp2 sa_lift_[3], sa_mlp_[3];
  ResMlpParams shape_code_;
  Mlp2 dp_topo_;
  ItaParams dp_ita_;
  ResMlpParams dp_head_;
  LinearParams dp_head_gate_;
  LinearParams dp_head_geo_;

  struct UpPhaseLayers {
    Mlp2 xpre;
    Mlp2 topo;
    ResMlpParams query;
    ItaParams ita;
    std::optional<LinearParams> kproj;  // phase 2 only
    LinearParams upa_phi, upa_psi;
    ResMlpParams upa_value;
    LinearParams upa_xlift;
    LinearParams upa_gamma1, upa_gamma2;
    LinearParams upa_pre;
    Tensor deconv_w, deconv_b;
    ResMlpParams head;
    LinearParams head_gate;
    Tensor head_geo_w, head_geo_b;  // per-child maps over the geometric basis
  } up_[2];
};

}  // namespace topgeo
