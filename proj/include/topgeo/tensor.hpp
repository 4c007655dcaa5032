#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace topgeo {

using Shape = std::vector<int>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the computation graph. The graph is the append-only tape:
// every op allocates a fresh node holding its forward value and a closure
// that pushes the node's gradient into its parents.
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on first touch, same size as values
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad();
};

// Shared handle to a graph node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor from_op(Shape shape, std::vector<double> values,
                        std::vector<Tensor> parents,
                        std::function<void(TensorNode&)> backward_fn);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(node_->values.size()); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& mutable_values() { return node_->values; }
  const std::vector<double>& grad() const;
  void zero_grad();
  double item() const;  // scalar tensors only

  const NodePtr& node() const { return node_; }

 private:
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;
};

// Reverse-mode accumulation from a scalar loss. Gradients accumulate across
// calls; callers zero grads first when they want fresh values.
void backward(const Tensor& loss, double seed = 1.0);

// ---- elementwise / arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor sqrt_op(const Tensor& x);
Tensor reciprocal(const Tensor& x);

// ---- linear algebra ----
// x: (..., A) treated as rows, w: A x B -> (..., B)
Tensor matmul(const Tensor& x, const Tensor& w);
// b broadcast over the last dimension of x
Tensor add_bias(const Tensor& x, const Tensor& b);

// ---- reductions / softmax ----
Tensor softmax_lastdim(const Tensor& x);
Tensor softmax_mid(const Tensor& x);        // N x k x C, softmax over k
Tensor maxpool_neighbors(const Tensor& x);  // N x k x C -> N x C
Tensor max_rows(const Tensor& x);           // N x C -> 1 x C
Tensor sum_all(const Tensor& x);            // -> scalar
Tensor sum_mid(const Tensor& x);            // N x k x C -> N x C
Tensor sum_lastdim(const Tensor& x);        // (..., C) -> (...)

// ---- structural ----
Tensor concat_lastdim(const std::vector<Tensor>& xs);
Tensor select_rows(const Tensor& x, const std::vector<int>& idx);  // SxC -> NxC
Tensor gather_rows(const Tensor& x,
                   const std::vector<std::vector<int>>& idx);  // SxC -> NxkxC
Tensor expand_mid(const Tensor& x, int k);      // N x C -> N x k x C
Tensor expand_lastdim(const Tensor& x, int c);  // N x k -> N x k x C
Tensor expand_cols(const Tensor& x, int c);     // N -> N x C
Tensor repeat_rows(const Tensor& x, int r);     // N x C -> (rN) x C, row r*i+j = x_i
Tensor broadcast_rows(const Tensor& x, int n);  // 1 x C -> N x C

// Stride-r transposed convolution along the point axis.
// h: N x Cin, w: r x Cin x Cout, b: r x Cout -> (rN) x Cout,
// out[r*i+j] = h_i * w_j + b_j.
Tensor point_split_deconv(const Tensor& h, const Tensor& w, const Tensor& b, int r);

// Central-difference verification: max over coordinates of
// |analytic - fd| / max(1, |fd|). f must return a scalar tensor.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double h);

}  // namespace topgeo
