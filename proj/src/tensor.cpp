#include "topgeo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "topgeo/errors.hpp"

namespace topgeo {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

void TensorNode::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

namespace {

NodePtr make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != static_cast<int64_t>(values.size()))
    throw ShapeError("tensor value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

// rows x lastdim view of an arbitrary-rank tensor
int64_t row_count(const Tensor& t) {
  return t.size() / t.dim(t.rank() - 1);
}

struct Friend;  // access Tensor private ctor through from_op only

}  // namespace

Tensor Tensor::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(numel(shape)), 0.0);
  return Tensor(make_node(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::scalar(double v) { return leaf({1}, {v}, false); }

Tensor Tensor::from_op(Shape shape, std::vector<double> values,
                       std::vector<Tensor> parents,
                       std::function<void(TensorNode&)> backward_fn) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  auto n = make_node(std::move(shape), std::move(values), rg);
  if (rg) {
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(n);
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item(): tensor is not scalar, shape " + shape_str(shape()));
  return node_->values[0];
}

void backward(const Tensor& loss, double seed) {
  if (loss.size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // iterative post-order DFS; reversed order visits each node before its parents
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
    for (int p = 0; p < 2; ++p) {
      auto& par = *n.parents[p];
      if (!par.requires_grad) continue;
      par.ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) par.grad[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.values[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.values[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [c](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += c * n.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v += c;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::from_op(x.shape(), std::move(out), {x}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      if (p.values[i] > 0.0) p.grad[i] += n.grad[i];
  });
}

Tensor tanh_op(const Tensor& x) {
  std::vector<double> out(x.values());
  for (double& v : out) v = std::tanh(v);
  return Tensor::from_op(x.shape(), std::move(out), {x}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      p.grad[i] += n.grad[i] * (1.0 - n.values[i] * n.values[i]);
  });
}

Tensor sqrt_op(const Tensor& x) {
  std::vector<double> out(x.values());
  for (double& v : out) v = std::sqrt(v);
  return Tensor::from_op(x.shape(), std::move(out), {x}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      if (n.values[i] > 0.0) p.grad[i] += n.grad[i] * 0.5 / n.values[i];
  });
}

Tensor reciprocal(const Tensor& x) {
  std::vector<double> out(x.values());
  for (double& v : out) v = 1.0 / v;
  return Tensor::from_op(x.shape(), std::move(out), {x}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      p.grad[i] -= n.grad[i] * n.values[i] * n.values[i];
  });
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2)
    throw ShapeError("matmul: weight must be 2D, got " + shape_str(w.shape()));
  const int a = x.dim(x.rank() - 1);
  if (a != w.dim(0))
    throw ShapeError("matmul: inner dims differ, x " + shape_str(x.shape()) +
                     " vs w " + shape_str(w.shape()));
  const int b = w.dim(1);
  const int64_t rows = row_count(x);
  std::vector<double> out(static_cast<size_t>(rows) * b, 0.0);
  const auto& xv = x.values();
  const auto& wv = w.values();
  for (int64_t i = 0; i < rows; ++i) {
    const double* xr = xv.data() + i * a;
    double* orow = out.data() + i * b;
    for (int t = 0; t < a; ++t) {
      const double xi = xr[t];
      if (xi == 0.0) continue;
      const double* wr = wv.data() + static_cast<int64_t>(t) * b;
      for (int j = 0; j < b; ++j) orow[j] += xi * wr[j];
    }
  }
  Shape out_shape(x.shape());
  out_shape.back() = b;
  return Tensor::from_op(
      std::move(out_shape), std::move(out), {x, w},
      [rows, a, b](TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        if (px.requires_grad) {
          px.ensure_grad();
          for (int64_t i = 0; i < rows; ++i) {
            const double* g = n.grad.data() + i * b;
            double* xg = px.grad.data() + i * a;
            for (int t = 0; t < a; ++t) {
              const double* wr = pw.values.data() + static_cast<int64_t>(t) * b;
              double acc = 0.0;
              for (int j = 0; j < b; ++j) acc += g[j] * wr[j];
              xg[t] += acc;
            }
          }
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          for (int64_t i = 0; i < rows; ++i) {
            const double* g = n.grad.data() + i * b;
            const double* xr = px.values.data() + i * a;
            for (int t = 0; t < a; ++t) {
              const double xi = xr[t];
              if (xi == 0.0) continue;
              double* wg = pw.grad.data() + static_cast<int64_t>(t) * b;
              for (int j = 0; j < b; ++j) wg[j] += xi * g[j];
            }
          }
        }
      });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  const int c = x.dim(x.rank() - 1);
  if (b.rank() != 1 || b.dim(0) != c)
    throw ShapeError("add_bias: bias " + shape_str(b.shape()) +
                     " does not match last dim of " + shape_str(x.shape()));
  const int64_t rows = row_count(x);
  std::vector<double> out(x.values());
  const auto& bv = b.values();
  for (int64_t i = 0; i < rows; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] += bv[j];
  return Tensor::from_op(x.shape(), std::move(out), {x, b}, [rows, c](TensorNode& n) {
    auto& px = *n.parents[0];
    auto& pb = *n.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) px.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int64_t i = 0; i < rows; ++i)
        for (int j = 0; j < c; ++j) pb.grad[j] += n.grad[i * c + j];
    }
  });
}

// ---------------------------------------------------------------------------
// softmax / reductions

namespace {

// softmax over contiguous slices of length `len` with stride `stride`,
// repeated `inner` times per outer block
Tensor softmax_strided(const Tensor& x, int64_t outer, int len, int64_t inner) {
  std::vector<double> out(x.values());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      double* base = out.data() + o * len * inner + in;
      double mx = base[0];
      for (int j = 1; j < len; ++j) mx = std::max(mx, base[j * inner]);
      if (!std::isfinite(mx)) throw NumericError("softmax: non-finite input");
      double sum = 0.0;
      for (int j = 0; j < len; ++j) {
        base[j * inner] = std::exp(base[j * inner] - mx);
        sum += base[j * inner];
      }
      for (int j = 0; j < len; ++j) base[j * inner] /= sum;
    }
  }
  return Tensor::from_op(
      x.shape(), std::move(out), {x}, [outer, len, inner](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t in = 0; in < inner; ++in) {
            const int64_t off = o * len * inner + in;
            double dot = 0.0;
            for (int j = 0; j < len; ++j)
              dot += n.grad[off + j * inner] * n.values[off + j * inner];
            for (int j = 0; j < len; ++j) {
              const double y = n.values[off + j * inner];
              p.grad[off + j * inner] += y * (n.grad[off + j * inner] - dot);
            }
          }
        }
      });
}

}  // namespace

Tensor softmax_lastdim(const Tensor& x) {
  const int c = x.dim(x.rank() - 1);
  if (c < 1) throw ShapeError("softmax_lastdim: empty last dimension");
  for (double v : x.values())
    if (!std::isfinite(v)) throw NumericError("softmax_lastdim: non-finite input");
  return softmax_strided(x, row_count(x), c, 1);
}

Tensor softmax_mid(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("softmax_mid: expected 3D, got " + shape_str(x.shape()));
  for (double v : x.values())
    if (!std::isfinite(v)) throw NumericError("softmax_mid: non-finite input");
  return softmax_strided(x, x.dim(0), x.dim(1), x.dim(2));
}

Tensor maxpool_neighbors(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("maxpool_neighbors: expected 3D, got " + shape_str(x.shape()));
  const int n = x.dim(0), k = x.dim(1), c = x.dim(2);
  if (k == 0) throw ShapeError("maxpool_neighbors: empty neighborhood axis");
  std::vector<double> out(static_cast<size_t>(n) * c);
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(n) * c, 0);
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      double best = xv[(static_cast<int64_t>(i) * k) * c + ch];
      int bj = 0;
      for (int j = 1; j < k; ++j) {
        const double v = xv[(static_cast<int64_t>(i) * k + j) * c + ch];
        if (v > best) { best = v; bj = j; }  // ties keep lowest index
      }
      out[static_cast<int64_t>(i) * c + ch] = best;
      (*argmax)[static_cast<int64_t>(i) * c + ch] = bj;
    }
  }
  return Tensor::from_op({n, c}, std::move(out), {x}, [n, k, c, argmax](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const int j = (*argmax)[static_cast<int64_t>(i) * c + ch];
        p.grad[(static_cast<int64_t>(i) * k + j) * c + ch] +=
            nd.grad[static_cast<int64_t>(i) * c + ch];
      }
  });
}

Tensor max_rows(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("max_rows: expected 2D, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  std::vector<double> out(static_cast<size_t>(c));
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(c), 0);
  const auto& xv = x.values();
  for (int ch = 0; ch < c; ++ch) {
    double best = xv[ch];
    int bi = 0;
    for (int i = 1; i < n; ++i) {
      const double v = xv[static_cast<int64_t>(i) * c + ch];
      if (v > best) { best = v; bi = i; }
    }
    out[ch] = best;
    (*argmax)[ch] = bi;
  }
  return Tensor::from_op({1, c}, std::move(out), {x}, [c, argmax](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (int ch = 0; ch < c; ++ch)
      p.grad[static_cast<int64_t>((*argmax)[ch]) * c + ch] += nd.grad[ch];
  });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tensor::from_op({1}, {s}, {x}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (double& g : p.grad) g += n.grad[0];
  });
}

Tensor sum_mid(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("sum_mid: expected 3D, got " + shape_str(x.shape()));
  const int n = x.dim(0), k = x.dim(1), c = x.dim(2);
  std::vector<double> out(static_cast<size_t>(n) * c, 0.0);
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      for (int ch = 0; ch < c; ++ch)
        out[static_cast<int64_t>(i) * c + ch] += xv[(static_cast<int64_t>(i) * k + j) * c + ch];
  return Tensor::from_op({n, c}, std::move(out), {x}, [n, k, c](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j)
        for (int ch = 0; ch < c; ++ch)
          p.grad[(static_cast<int64_t>(i) * k + j) * c + ch] +=
              nd.grad[static_cast<int64_t>(i) * c + ch];
  });
}

Tensor sum_lastdim(const Tensor& x) {
  const int c = x.dim(x.rank() - 1);
  const int64_t rows = row_count(x);
  std::vector<double> out(static_cast<size_t>(rows), 0.0);
  const auto& xv = x.values();
  for (int64_t i = 0; i < rows; ++i)
    for (int j = 0; j < c; ++j) out[i] += xv[i * c + j];
  Shape os(x.shape().begin(), x.shape().end() - 1);
  return Tensor::from_op(std::move(os), std::move(out), {x}, [rows, c](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (int64_t i = 0; i < rows; ++i)
      for (int j = 0; j < c; ++j) p.grad[i * c + j] += nd.grad[i];
  });
}

// ---------------------------------------------------------------------------
// structural

Tensor concat_lastdim(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_lastdim: no inputs");
  const int64_t rows = row_count(xs[0]);
  Shape lead(xs[0].shape().begin(), xs[0].shape().end() - 1);
  int total = 0;
  std::vector<int> widths;
  for (const auto& x : xs) {
    Shape l(x.shape().begin(), x.shape().end() - 1);
    if (l != lead)
      throw ShapeError("concat_lastdim: leading dims differ, " + shape_str(xs[0].shape()) +
                       " vs " + shape_str(x.shape()));
    widths.push_back(x.dim(x.rank() - 1));
    total += widths.back();
  }
  std::vector<double> out(static_cast<size_t>(rows) * total);
  int off = 0;
  for (size_t t = 0; t < xs.size(); ++t) {
    const auto& xv = xs[t].values();
    const int w = widths[t];
    for (int64_t i = 0; i < rows; ++i)
      std::copy(xv.begin() + i * w, xv.begin() + (i + 1) * w,
                out.begin() + i * total + off);
    off += w;
  }
  Shape os(lead);
  os.push_back(total);
  return Tensor::from_op(std::move(os), std::move(out), xs,
                         [rows, widths, total](TensorNode& nd) {
                           int off2 = 0;
                           for (size_t t = 0; t < nd.parents.size(); ++t) {
                             auto& p = *nd.parents[t];
                             const int w = widths[t];
                             if (p.requires_grad) {
                               p.ensure_grad();
                               for (int64_t i = 0; i < rows; ++i)
                                 for (int j = 0; j < w; ++j)
                                   p.grad[i * w + j] += nd.grad[i * total + off2 + j];
                             }
                             off2 += w;
                           }
                         });
}

Tensor select_rows(const Tensor& x, const std::vector<int>& idx) {
  if (x.rank() != 2) throw ShapeError("select_rows: expected 2D, got " + shape_str(x.shape()));
  const int s = x.dim(0), c = x.dim(1);
  const int n = static_cast<int>(idx.size());
  std::vector<double> out(static_cast<size_t>(n) * c);
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i) {
    if (idx[i] < 0 || idx[i] >= s)
      throw ShapeError("select_rows: index " + std::to_string(idx[i]) + " out of range");
    std::copy(xv.begin() + static_cast<int64_t>(idx[i]) * c,
              xv.begin() + static_cast<int64_t>(idx[i] + 1) * c,
              out.begin() + static_cast<int64_t>(i) * c);
  }
  auto keep = std::make_shared<std::vector<int>>(idx);
  return Tensor::from_op({n, c}, std::move(out), {x}, [c, keep](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < keep->size(); ++i)
      for (int j = 0; j < c; ++j)
        p.grad[static_cast<int64_t>((*keep)[i]) * c + j] +=
            nd.grad[static_cast<int64_t>(i) * c + j];
  });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::vector<int>>& idx) {
  if (x.rank() != 2) throw ShapeError("gather_rows: expected 2D, got " + shape_str(x.shape()));
  const int s = x.dim(0), c = x.dim(1);
  const int n = static_cast<int>(idx.size());
  const int k = n > 0 ? static_cast<int>(idx[0].size()) : 0;
  std::vector<double> out(static_cast<size_t>(n) * k * c);
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(idx[i].size()) != k)
      throw ShapeError("gather_rows: ragged index rows");
    for (int j = 0; j < k; ++j) {
      const int r = idx[i][j];
      if (r < 0 || r >= s)
        throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range");
      std::copy(xv.begin() + static_cast<int64_t>(r) * c,
                xv.begin() + static_cast<int64_t>(r + 1) * c,
                out.begin() + (static_cast<int64_t>(i) * k + j) * c);
    }
  }
  auto keep = std::make_shared<std::vector<std::vector<int>>>(idx);
  return Tensor::from_op({n, k, c}, std::move(out), {x}, [k, c, keep](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < keep->size(); ++i)
      for (int j = 0; j < k; ++j) {
        const int r = (*keep)[i][j];
        for (int ch = 0; ch < c; ++ch)
          p.grad[static_cast<int64_t>(r) * c + ch] +=
              nd.grad[(static_cast<int64_t>(i) * k + j) * c + ch];
      }
  });
}

Tensor expand_mid(const Tensor& x, int k) {
  if (x.rank() != 2) throw ShapeError("expand_mid: expected 2D, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  std::vector<double> out(static_cast<size_t>(n) * k * c);
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      std::copy(xv.begin() + static_cast<int64_t>(i) * c,
                xv.begin() + static_cast<int64_t>(i + 1) * c,
                out.begin() + (static_cast<int64_t>(i) * k + j) * c);
  return Tensor::from_op({n, k, c}, std::move(out), {x}, [n, k, c](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j)
        for (int ch = 0; ch < c; ++ch)
          p.grad[static_cast<int64_t>(i) * c + ch] +=
              nd.grad[(static_cast<int64_t>(i) * k + j) * c + ch];
  });
}

Tensor expand_lastdim(const Tensor& x, int c) {
  const int64_t rows = x.size();
  std::vector<double> out(static_cast<size_t>(rows) * c);
  const auto& xv = x.values();
  for (int64_t i = 0; i < rows; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] = xv[i];
  Shape os(x.shape());
  os.push_back(c);
  return Tensor::from_op(std::move(os), std::move(out), {x}, [rows, c](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (int64_t i = 0; i < rows; ++i)
      for (int j = 0; j < c; ++j) p.grad[i] += nd.grad[i * c + j];
  });
}

Tensor expand_cols(const Tensor& x, int c) {
  if (x.rank() != 1) throw ShapeError("expand_cols: expected 1D, got " + shape_str(x.shape()));
  return expand_lastdim(x, c);
}

Tensor repeat_rows(const Tensor& x, int r) {
  if (x.rank() != 2) throw ShapeError("repeat_rows: expected 2D, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  std::vector<double> out(static_cast<size_t>(n) * r * c);
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r; ++j)
      std::copy(xv.begin() + static_cast<int64_t>(i) * c,
                xv.begin() + static_cast<int64_t>(i + 1) * c,
                out.begin() + (static_cast<int64_t>(i) * r + j) * c);
  return Tensor::from_op({n * r, c}, std::move(out), {x}, [n, r, c](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < r; ++j)
        for (int ch = 0; ch < c; ++ch)
          p.grad[static_cast<int64_t>(i) * c + ch] +=
              nd.grad[(static_cast<int64_t>(i) * r + j) * c + ch];
  });
}

Tensor broadcast_rows(const Tensor& x, int n) {
  if (x.rank() != 2 || x.dim(0) != 1)
    throw ShapeError("broadcast_rows: expected 1xC, got " + shape_str(x.shape()));
  const int c = x.dim(1);
  std::vector<double> out(static_cast<size_t>(n) * c);
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i) std::copy(xv.begin(), xv.end(), out.begin() + static_cast<int64_t>(i) * c);
  return Tensor::from_op({n, c}, std::move(out), {x}, [n, c](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) p.grad[ch] += nd.grad[static_cast<int64_t>(i) * c + ch];
  });
}

Tensor point_split_deconv(const Tensor& h, const Tensor& w, const Tensor& b, int r) {
  if (r < 2) throw ConfigError("point_split_deconv: splitting factor must be >= 2, got " + std::to_string(r));
  if (h.rank() != 2) throw ShapeError("point_split_deconv: input must be 2D, got " + shape_str(h.shape()));
  const int n = h.dim(0), cin = h.dim(1);
  if (w.rank() != 3 || w.dim(0) != r || w.dim(1) != cin)
    throw ShapeError("point_split_deconv: kernel " + shape_str(w.shape()) +
                     " incompatible with input " + shape_str(h.shape()));
  const int cout = w.dim(2);
  if (b.rank() != 2 || b.dim(0) != r || b.dim(1) != cout)
    throw ShapeError("point_split_deconv: bias " + shape_str(b.shape()) + " incompatible");
  std::vector<double> out(static_cast<size_t>(n) * r * cout);
  const auto& hv = h.values();
  const auto& wv = w.values();
  const auto& bv = b.values();
  for (int i = 0; i < n; ++i) {
    const double* hr = hv.data() + static_cast<int64_t>(i) * cin;
    for (int j = 0; j < r; ++j) {
      double* orow = out.data() + (static_cast<int64_t>(i) * r + j) * cout;
      const double* wj = wv.data() + static_cast<int64_t>(j) * cin * cout;
      const double* bj = bv.data() + static_cast<int64_t>(j) * cout;
      for (int ch = 0; ch < cout; ++ch) orow[ch] = bj[ch];
      for (int t = 0; t < cin; ++t) {
        const double hi = hr[t];
        if (hi == 0.0) continue;
        const double* wr = wj + static_cast<int64_t>(t) * cout;
        for (int ch = 0; ch < cout; ++ch) orow[ch] += hi * wr[ch];
      }
    }
  }
  return Tensor::from_op(
      {n * r, cout}, std::move(out), {h, w, b}, [n, r, cin, cout](TensorNode& nd) {
        auto& ph = *nd.parents[0];
        auto& pw = *nd.parents[1];
        auto& pb = *nd.parents[2];
        if (ph.requires_grad) ph.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < r; ++j) {
            const double* g = nd.grad.data() + (static_cast<int64_t>(i) * r + j) * cout;
            if (ph.requires_grad) {
              for (int t = 0; t < cin; ++t) {
                const double* wr =
                    pw.values.data() + (static_cast<int64_t>(j) * cin + t) * cout;
                double acc = 0.0;
                for (int ch = 0; ch < cout; ++ch) acc += g[ch] * wr[ch];
                ph.grad[static_cast<int64_t>(i) * cin + t] += acc;
              }
            }
            if (pw.requires_grad) {
              const double* hr = ph.values.data() + static_cast<int64_t>(i) * cin;
              for (int t = 0; t < cin; ++t) {
                double* wg = pw.grad.data() + (static_cast<int64_t>(j) * cin + t) * cout;
                for (int ch = 0; ch < cout; ++ch) wg[ch] += hr[t] * g[ch];
              }
            }
            if (pb.requires_grad) {
              double* bg = pb.grad.data() + static_cast<int64_t>(j) * cout;
              for (int ch = 0; ch < cout; ++ch) bg[ch] += g[ch];
            }
          }
        }
      });
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double h) {
  Tensor probe = Tensor::leaf(x.shape(), x.values(), true);
  Tensor y = f(probe);
  probe.zero_grad();
  backward(y);
  const std::vector<double> analytic = probe.grad();

  std::vector<double> vals(x.values());
  double max_err = 0.0;
  for (size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    vals[i] = orig + h;
    const double fp = f(Tensor::leaf(x.shape(), vals, false)).item();
    vals[i] = orig - h;
    const double fm = f(Tensor::leaf(x.shape(), vals, false)).item();
    vals[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("grad_check: non-finite function evaluation");
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace topgeo
