#include "topgeo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "topgeo/errors.hpp"

namespace topgeo {

namespace {

void check_nonempty(const PointCloud& a, const PointCloud& b, const char* op) {
  if (a.n() == 0 || b.n() == 0)
    throw ShapeError(std::string(op) + ": empty point cloud");
}

// directed nearest-neighbor sum; equidistant targets resolve to lowest index
double nn_dist(const Vec3& x, const PointCloud& ys, int* arg = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  int bj = 0;
  for (int j = 0; j < ys.n(); ++j) {
    const double d = dist(x, ys[j]);
    if (d < best) {
      best = d;
      bj = j;
    }
  }
  if (arg) *arg = bj;
  return best;
}

// O(n^3) shortest-augmenting-path assignment (Kuhn-Munkres family);
// returns minimal total cost over a square cost matrix
double hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1,
                             std::numeric_limits<double>::infinity());
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      int j1 = 0;
      double delta = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost[static_cast<size_t>(i0 - 1)][static_cast<size_t>(j - 1)] -
                           u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j)
    if (p[static_cast<size_t>(j)])
      total += cost[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)][static_cast<size_t>(j - 1)];
  return total;
}

// forward auction with epsilon scaling; returns the cost of the final
// (feasible, near-optimal) matching — an upper bound on the exact optimum
double auction_assignment(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  double scale = 0.0;
  for (const auto& row : cost)
    for (double c : row) scale = std::max(scale, c);
  if (scale == 0.0) return 0.0;

  std::vector<double> price(static_cast<size_t>(n), 0.0);
  std::vector<int> owner(static_cast<size_t>(n), -1);   // object -> person
  std::vector<int> object(static_cast<size_t>(n), -1);  // person -> object

  for (double eps = 0.1 * scale; eps >= 1e-4 * scale; eps *= 0.5) {
    std::fill(owner.begin(), owner.end(), -1);
    std::fill(object.begin(), object.end(), -1);
    std::vector<int> queue;
    queue.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) queue.push_back(i);
    while (!queue.empty()) {
      const int i = queue.back();
      queue.pop_back();
      // values are -cost; find best and second-best object
      double best = -std::numeric_limits<double>::infinity();
      double second = -std::numeric_limits<double>::infinity();
      int bj = 0;
      for (int j = 0; j < n; ++j) {
        const double v = -cost[static_cast<size_t>(i)][static_cast<size_t>(j)] -
                         price[static_cast<size_t>(j)];
        if (v > best) {
          second = best;
          best = v;
          bj = j;
        } else if (v > second) {
          second = v;
        }
      }
      const double bid = (best - second) + eps;
      price[static_cast<size_t>(bj)] += bid;
      const int prev = owner[static_cast<size_t>(bj)];
      if (prev >= 0) {
        object[static_cast<size_t>(prev)] = -1;
        queue.push_back(prev);
      }
      owner[static_cast<size_t>(bj)] = i;
      object[static_cast<size_t>(i)] = bj;
    }
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    total += cost[static_cast<size_t>(i)][static_cast<size_t>(object[static_cast<size_t>(i)])];
  return total;
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b, bool squared) {
  check_nonempty(a, b, "chamfer");
  double sa = 0.0, sb = 0.0;
  for (const auto& x : a.points) {
    const double d = nn_dist(x, b);
    sa += squared ? d * d : d;
  }
  for (const auto& y : b.points) {
    const double d = nn_dist(y, a);
    sb += squared ? d * d : d;
  }
  return sa / a.n() + sb / b.n();
}

double hausdorff(const PointCloud& a, const PointCloud& b) {
  check_nonempty(a, b, "hausdorff");
  double da = 0.0, db = 0.0;
  for (const auto& x : a.points) da = std::max(da, nn_dist(x, b));
  for (const auto& y : b.points) db = std::max(db, nn_dist(y, a));
  return std::max(da, db);
}

double emd(const PointCloud& a, const PointCloud& b, EmdMode mode) {
  check_nonempty(a, b, "emd");
  if (a.n() != b.n())
    throw ShapeError("emd: cardinality mismatch " + std::to_string(a.n()) + " vs " +
                     std::to_string(b.n()));
  if (mode == EmdMode::exact && a.n() > 512)
    throw ConfigError("emd: exact mode capped at 512 points, got " + std::to_string(a.n()));
  const int n = a.n();
  std::vector<std::vector<double>> cost(static_cast<size_t>(n),
                                        std::vector<double>(static_cast<size_t>(n)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost[static_cast<size_t>(i)][static_cast<size_t>(j)] = dist(a[i], b[j]);
  const double total = mode == EmdMode::exact ? hungarian(cost) : auction_assignment(cost);
  return total / n;
}

Tensor chamfer_loss(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.dim(1) != 3 || b.rank() != 2 || b.dim(1) != 3)
    throw ShapeError("chamfer_loss: expected n x 3 clouds, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  const int na = a.dim(0), nb = b.dim(0);
  if (na == 0 || nb == 0) throw ShapeError("chamfer_loss: empty point cloud");

  auto as_cloud = [](const Tensor& t) {
    PointCloud c;
    const auto& v = t.values();
    c.points.resize(static_cast<size_t>(t.dim(0)));
    for (int i = 0; i < t.dim(0); ++i)
      c.points[static_cast<size_t>(i)] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
    return c;
  };
  const PointCloud ca = as_cloud(a), cb = as_cloud(b);

  auto match_ab = std::make_shared<std::vector<int>>(static_cast<size_t>(na));
  auto match_ba = std::make_shared<std::vector<int>>(static_cast<size_t>(nb));
  double sa = 0.0, sb = 0.0;
  for (int i = 0; i < na; ++i) {
    const double d = nn_dist(ca[i], cb, &(*match_ab)[static_cast<size_t>(i)]);
    sa += d * d;
  }
  for (int j = 0; j < nb; ++j) {
    const double d = nn_dist(cb[j], ca, &(*match_ba)[static_cast<size_t>(j)]);
    sb += d * d;
    // target rows whose nearest predictions tie exactly (typically duplicated
    // points from the splitting stages) rotate across the tied rows, so
    // coincident copies receive differentiated pulls instead of all gradient
    // flowing to the lowest index
    std::vector<int> tied;
    for (int i = 0; i < na; ++i)
      if (dist(cb[j], ca[i]) == d) tied.push_back(i);
    if (tied.size() > 1)
      (*match_ba)[static_cast<size_t>(j)] =
          tied[static_cast<size_t>(j) % tied.size()];
  }
  const double value = sa / na + sb / nb;

  return Tensor::from_op(
      {1}, {value}, {a, b}, [na, nb, match_ab, match_ba](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        const double g = n.grad[0];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        auto accumulate = [g](TensorNode& px, TensorNode& py, int i, int j, double w) {
          // d(||x_i - y_j||^2) = 2 (x_i - y_j)
          for (int t = 0; t < 3; ++t) {
            const double gt =
                g * w * 2.0 * (px.values[3 * i + t] - py.values[3 * j + t]);
            if (px.requires_grad) px.grad[3 * i + t] += gt;
            if (py.requires_grad) py.grad[3 * j + t] -= gt;
          }
        };
        for (int i = 0; i < na; ++i)
          accumulate(pa, pb, i, (*match_ab)[static_cast<size_t>(i)], 1.0 / na);
        for (int j = 0; j < nb; ++j)
          accumulate(pb, pa, j, (*match_ba)[static_cast<size_t>(j)], 1.0 / nb);
      });
}

double geometry_loss(const PointCloud& r0, const PointCloud& r1,
                     const PointCloud& r2, const PointCloud& p) {
  return chamfer(r0, p, true) + chamfer(r1, p, true) + chamfer(r2, p, true);
}

Tensor geometry_loss(const Tensor& r0, const Tensor& r1, const Tensor& r2,
                     const Tensor& p) {
  return add(add(chamfer_loss(r0, p), chamfer_loss(r1, p)), chamfer_loss(r2, p));
}

namespace {

double topo_phase_term(const std::vector<std::vector<double>>& k) {
  double s = 0.0;
  for (const auto& row : k) {
    double m = 0.0;
    for (double v : row) m += v * v;
    s += m / static_cast<double>(row.size());
  }
  return s;
}

void check_topo_rows(size_t n0, size_t n1, size_t n2) {
  if (n1 != 2 * n0 || n2 != 2 * n1)
    throw ShapeError("topo_constraint_loss: row counts must be N/4, N/2, N; got " +
                     std::to_string(n0) + ", " + std::to_string(n1) + ", " +
                     std::to_string(n2));
}

}  // namespace

double topo_constraint_loss(const std::vector<std::vector<double>>& k0,
                            const std::vector<std::vector<double>>& k1,
                            const std::vector<std::vector<double>>& k2) {
  check_topo_rows(k0.size(), k1.size(), k2.size());
  return topo_phase_term(k0) + topo_phase_term(k1) + topo_phase_term(k2);
}

Tensor topo_constraint_loss(const Tensor& k0, const Tensor& k1, const Tensor& k2) {
  check_topo_rows(static_cast<size_t>(k0.dim(0)), static_cast<size_t>(k1.dim(0)),
                  static_cast<size_t>(k2.dim(0)));
  auto phase = [](const Tensor& k) {
    return scale(sum_all(mul(k, k)), 1.0 / k.dim(1));
  };
  return add(add(phase(k0), phase(k1)), phase(k2));
}

LossBreakdown total_loss(double geo, double top, double lambda) {
  if (!std::isfinite(geo) || !std::isfinite(top))
    throw NumericError("total_loss: non-finite input");
  LossBreakdown out;
  out.geo = geo;
  out.top = top;
  out.lambda = lambda;
  out.total = lambda * geo + top;
  return out;
}

}  // namespace topgeo
