#include "topgeo/params.hpp"

#include <cmath>

#include "topgeo/errors.hpp"

namespace topgeo {

uint64_t Rng::next_u64() {
  // splitmix64
  state_ += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int n) {
  return static_cast<int>(uniform() * n) % n;
}

void Hyper::validate() const {
  auto pos = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("hyper: ") + name + " must be positive");
  };
  pos(n, "n");
  pos(k, "k");
  pos(c1, "c1");
  pos(c2, "c2");
  pos(c3, "c3");
  pos(c, "c");
  pos(m, "m");
  if (r < 2) throw ConfigError("hyper: splitting factor r must be >= 2");
  if (m != c)
    throw ConfigError("hyper: m must equal c (topological lifts add into attention features)");
  if (!(lambda > 0.0)) throw ConfigError("hyper: lambda must be positive");
}

Tensor mlp_apply(const LinearParams& p, const Tensor& x, Activation act) {
  Tensor y = add_bias(matmul(x, p.w), p.b);
  switch (act) {
    case Activation::relu:
      return relu(y);
    case Activation::tanh:
      return tanh_op(y);
    case Activation::none:
      return y;
  }
  return y;
}

Tensor resmlp_apply(const ResMlpParams& p, const Tensor& x) {
  Tensor branch = mlp_apply(p.fc2, relu(mlp_apply(p.fc1, x, Activation::none)),
                            Activation::none);
  Tensor skip = p.proj ? mlp_apply(*p.proj, x, Activation::none) : x;
  return add(skip, branch);
}

Tensor ParamStore::add(const std::string& name, Shape shape, std::vector<double> values) {
  if (entries_.count(name))
    throw ConfigError("param store: duplicate name " + name);
  Tensor t = Tensor::leaf(std::move(shape), std::move(values), true);
  entries_.emplace(name, t);
  return t;
}

Tensor ParamStore::add_init(const std::string& name, Shape shape, int fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / fan_in);
  std::vector<double> v(static_cast<size_t>(numel(shape)));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return add(name, std::move(shape), std::move(v));
}

Tensor ParamStore::add_zeros(const std::string& name, Shape shape) {
  std::vector<double> v(static_cast<size_t>(numel(shape)), 0.0);
  return add(name, std::move(shape), std::move(v));
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("param store: unknown name " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("param store: unknown name " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

LinearParams make_linear(ParamStore& ps, const std::string& prefix, int in, int out,
                         Rng& rng, bool zero_init) {
  LinearParams p;
  if (zero_init) {
    p.w = ps.add_zeros(prefix + ".w", {in, out});
    p.b = ps.add_zeros(prefix + ".b", {out});
  } else {
    p.w = ps.add_init(prefix + ".w", {in, out}, in, rng);
    p.b = ps.add_init(prefix + ".b", {out}, in, rng);
  }
  return p;
}

ResMlpParams make_resmlp(ParamStore& ps, const std::string& prefix, int in, int hidden,
                         int out, Rng& rng, bool zero_init_out) {
  ResMlpParams p;
  if (in != out) p.proj = make_linear(ps, prefix + ".proj", in, out, rng, zero_init_out);
  p.fc1 = make_linear(ps, prefix + ".fc1", in, hidden, rng);
  p.fc2 = make_linear(ps, prefix + ".fc2", hidden, out, rng, zero_init_out);
  return p;
}

LinearParams linear_view(const ParamStore& ps, const std::string& prefix) {
  return LinearParams{ps.at(prefix + ".w"), ps.at(prefix + ".b")};
}

ResMlpParams resmlp_view(const ParamStore& ps, const std::string& prefix, bool has_proj) {
  ResMlpParams p;
  if (has_proj) p.proj = linear_view(ps, prefix + ".proj");
  p.fc1 = linear_view(ps, prefix + ".fc1");
  p.fc2 = linear_view(ps, prefix + ".fc2");
  return p;
}

}  // namespace topgeo
