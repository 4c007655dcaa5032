#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "topgeo/tensor.hpp"

namespace topgeo {

// Deterministic RNG used everywhere; hand-rolled draws so output does not
// depend on standard-library distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  int uniform_int(int n);                 // [0, n)

 private:
  uint64_t state_;
};

// Default-architecture hyperparameters (N = 2048 setting); width fields are
// configurable so desk-scale runs can shrink the model.
struct Hyper {
  int n = 2048;   // nominal training cloud size
  int k = 16;     // neighborhood size
  int c1 = 128;   // SA level-1 feature width
  int c2 = 256;   // SA level-2 feature width
  int c3 = 512;   // global shape code width
  int c = 128;    // attention feature width
  int m = 128;    // topological lift width, tied to c
  int r = 2;      // point-split factor per UP phase
  double lambda = 1000.0;

  void validate() const;
};

struct LinearParams {
  Tensor w;  // in x out
  Tensor b;  // out
};

struct ResMlpParams {
  std::optional<LinearParams> proj;  // absent when input and output widths match
  LinearParams fc1;
  LinearParams fc2;
};

enum class Activation { relu, tanh, none };

// One affine layer followed by an activation.
Tensor mlp_apply(const LinearParams& p, const Tensor& x, Activation act);

// proj(x) + fc2(relu(fc1(x))); proj is the identity when widths match.
Tensor resmlp_apply(const ResMlpParams& p, const Tensor& x);

// Named, shaped parameter tensors with gradients; iteration is in sorted
// name order so serialization and optimizer sweeps are deterministic.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(Hyper meta) : meta_(std::move(meta)) { meta_.validate(); }

  const Hyper& meta() const { return meta_; }

  Tensor add(const std::string& name, Shape shape, std::vector<double> values);
  // Kaiming-style fan-in uniform init
  Tensor add_init(const std::string& name, Shape shape, int fan_in, Rng& rng);
  Tensor add_zeros(const std::string& name, Shape shape);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  void zero_grad();
  size_t size() const { return entries_.size(); }
  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::map<std::string, Tensor>& entries() { return entries_; }

 private:
  std::map<std::string, Tensor> entries_;
  Hyper meta_;
};

// Layer builders used by the model; parameters land in the store under
// "<prefix>.w" / "<prefix>.b" etc.
LinearParams make_linear(ParamStore& ps, const std::string& prefix, int in, int out,
                         Rng& rng, bool zero_init = false);
ResMlpParams make_resmlp(ParamStore& ps, const std::string& prefix, int in, int hidden,
                         int out, Rng& rng, bool zero_init_out = false);
LinearParams linear_view(const ParamStore& ps, const std::string& prefix);
ResMlpParams resmlp_view(const ParamStore& ps, const std::string& prefix, bool has_proj);

}  // namespace topgeo
