#pragma once

#include <array>
#include <optional>
#include <vector>

namespace topgeo {

using Vec3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Vec3> points;

  int n() const { return static_cast<int>(points.size()); }
  const Vec3& operator[](int i) const { return points[static_cast<size_t>(i)]; }
  Vec3& operator[](int i) { return points[static_cast<size_t>(i)]; }
};

struct NormalizationRecord {
  Vec3 centroid{0.0, 0.0, 0.0};
  double furthest_distance = 1.0;
};

// Per-point k-nearest-neighbor cache: indices into the source cloud with
// distances nondecreasing along the k axis, self excluded.
struct NeighborIndex {
  std::vector<std::vector<int>> indices;    // N x k
  std::vector<std::vector<double>> distances;  // N x k
  int k = 0;
};

double dist(const Vec3& a, const Vec3& b);

// Center at origin, scale so the farthest point sits at norm exactly 1.
std::pair<PointCloud, NormalizationRecord> normalize_unit_sphere(const PointCloud& cloud);
PointCloud denormalize(const PointCloud& cloud, const NormalizationRecord& rec);

// Greedy farthest point sampling with canonical tie rules: the seed is the
// point farthest from the centroid (ties by (x,y,z) then index), each later
// pick maximizes min-distance to the chosen set with the same tie rule.
std::vector<int> fps(const PointCloud& cloud, int m);

// k nearest by Euclidean distance, candidates ordered by
// (distance, x, y, z, index) so ties are permutation-independent.
// self_index[i], when given, names the source row excluded for query i.
NeighborIndex knn(const PointCloud& query, const PointCloud& source, int k,
                  const std::vector<int>* self_index = nullptr);

// entry (i, j) = centroid_i - neighbor_j
std::vector<std::vector<Vec3>> group_subtract(const PointCloud& centroids,
                                              const PointCloud& source,
                                              const NeighborIndex& nbr);

// Inverse-distance feature interpolation over exactly 3 neighbors:
// out_i = sum_j w_ij * x[j] / sum_j w_ij, w_ij = 1 / (dist_ij + 1e-8).
std::vector<std::vector<double>> inverse_distance_interpolate(
    const PointCloud& p_pre, const std::vector<std::vector<double>>& x_pre,
    const NeighborIndex& nbr3);

}  // namespace topgeo
