#pragma once

#include <string>
#include <vector>

#include "topgeo/geometry.hpp"
#include "topgeo/tensor.hpp"

namespace topgeo {

enum class EmdMode { exact, approximate };

struct MetricReport {
  double cd = 0.0;
  double hd = 0.0;
  double emd = 0.0;
  EmdMode emd_mode = EmdMode::exact;
};

struct LossBreakdown {
  double geo = 0.0;
  double top = 0.0;
  double total = 0.0;
  double lambda = 1000.0;
};

// Symmetric Chamfer distance with unsquared L2 norms:
// (1/|a|) sum_x min_y ||x-y|| + (1/|b|) sum_y min_x ||y-x||.
// squared=true is offered for cross-paper comparison only.
double chamfer(const PointCloud& a, const PointCloud& b, bool squared = false);

double hausdorff(const PointCloud& a, const PointCloud& b);

// Optimal-assignment distance over L2 costs, normalized by |a|.
// Exact mode: Hungarian algorithm, |a| <= 512. Approximate mode: auction
// with an epsilon schedule halving from 0.1*scale to 1e-4*scale.
double emd(const PointCloud& a, const PointCloud& b, EmdMode mode);

// Differentiable Chamfer training loss over graph tensors of shape n x 3,
// using squared distances (the reporting metric above stays unsquared by
// default). Matching is fixed at forward time; equidistant candidates resolve
// to the lowest index on the a->b side, while exact ties on the b->a side
// rotate deterministically across the tied rows so coincident duplicates
// receive differentiated gradients.
Tensor chamfer_loss(const Tensor& a, const Tensor& b);

// sum over l of squared chamfer(r_l, p); ground truth is never downsampled
double geometry_loss(const PointCloud& r0, const PointCloud& r1,
                     const PointCloud& r2, const PointCloud& p);
Tensor geometry_loss(const Tensor& r0, const Tensor& r1, const Tensor& r2,
                     const Tensor& p);

// sum over phases and points of the per-point channel mean of k^2
double topo_constraint_loss(const std::vector<std::vector<double>>& k0,
                            const std::vector<std::vector<double>>& k1,
                            const std::vector<std::vector<double>>& k2);
Tensor topo_constraint_loss(const Tensor& k0, const Tensor& k1, const Tensor& k2);

LossBreakdown total_loss(double geo, double top, double lambda = 1000.0);

}  // namespace topgeo
