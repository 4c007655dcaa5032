#include "topgeo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "topgeo/errors.hpp"

namespace topgeo {

double dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

namespace {

double dist2(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// canonical candidate order for ties: larger key wins for fps,
// smaller wins for knn
bool lex_less(const Vec3& a, const Vec3& b) {
  if (a[0] != b[0]) return a[0] < b[0];
  if (a[1] != b[1]) return a[1] < b[1];
  return a[2] < b[2];
}

void check_finite(const PointCloud& c, const char* who) {
  for (const auto& p : c.points)
    for (double v : p)
      if (!std::isfinite(v)) throw NumericError(std::string(who) + ": non-finite coordinate");
}

}  // namespace

std::pair<PointCloud, NormalizationRecord> normalize_unit_sphere(const PointCloud& cloud) {
  if (cloud.n() < 2)
    throw ShapeError("normalize_unit_sphere: need at least 2 points, got " +
                     std::to_string(cloud.n()));
  check_finite(cloud, "normalize_unit_sphere");
  Vec3 centroid{0.0, 0.0, 0.0};
  for (const auto& p : cloud.points)
    for (int d = 0; d < 3; ++d) centroid[d] += p[d];
  for (int d = 0; d < 3; ++d) centroid[d] /= cloud.n();

  double fd = 0.0;
  for (const auto& p : cloud.points) fd = std::max(fd, dist(p, centroid));
  if (fd == 0.0)
    throw ShapeError("normalize_unit_sphere: degenerate cloud, all points identical");

  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points)
    out.points.push_back({(p[0] - centroid[0]) / fd, (p[1] - centroid[1]) / fd,
                          (p[2] - centroid[2]) / fd});
  return {std::move(out), NormalizationRecord{centroid, fd}};
}

PointCloud denormalize(const PointCloud& cloud, const NormalizationRecord& rec) {
  if (!(rec.furthest_distance > 0.0))
    throw ShapeError("denormalize: furthest_distance must be positive");
  check_finite(cloud, "denormalize");
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points)
    out.points.push_back({p[0] * rec.furthest_distance + rec.centroid[0],
                          p[1] * rec.furthest_distance + rec.centroid[1],
                          p[2] * rec.furthest_distance + rec.centroid[2]});
  return out;
}

std::vector<int> fps(const PointCloud& cloud, int m) {
  const int n = cloud.n();
  if (m < 1 || m > n)
    throw ShapeError("fps: target count " + std::to_string(m) + " out of range for n=" +
                     std::to_string(n));

  Vec3 centroid{0.0, 0.0, 0.0};
  for (const auto& p : cloud.points)
    for (int d = 0; d < 3; ++d) centroid[d] += p[d];
  for (int d = 0; d < 3; ++d) centroid[d] /= n;

  // canonical seed: farthest from centroid, ties by lexicographic coords
  int seed = 0;
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    const double d = dist2(cloud[i], centroid);
    if (d > best || (d == best && lex_less(cloud[i], cloud[seed]))) {
      best = d;
      seed = i;
    }
  }

  std::vector<int> chosen{seed};
  std::vector<double> min_d2(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) min_d2[i] = dist2(cloud[i], cloud[seed]);

  while (static_cast<int>(chosen.size()) < m) {
    int pick = -1;
    double bd = -1.0;
    for (int i = 0; i < n; ++i) {
      if (min_d2[i] > bd || (pick >= 0 && min_d2[i] == bd && lex_less(cloud[i], cloud[pick]))) {
        bd = min_d2[i];
        pick = i;
      }
    }
    chosen.push_back(pick);
    for (int i = 0; i < n; ++i) min_d2[i] = std::min(min_d2[i], dist2(cloud[i], cloud[pick]));
  }
  return chosen;
}

NeighborIndex knn(const PointCloud& query, const PointCloud& source, int k,
                  const std::vector<int>* self_index) {
  const int qn = query.n(), sn = source.n();
  if (k < 1) throw ShapeError("knn: k must be >= 1");
  const int avail = self_index ? sn - 1 : sn;
  if (avail < k)
    throw ShapeError("knn: only " + std::to_string(avail) + " candidates for k=" +
                     std::to_string(k));
  if (self_index && static_cast<int>(self_index->size()) != qn)
    throw ShapeError("knn: self_index size does not match query");

  NeighborIndex out;
  out.k = k;
  out.indices.resize(static_cast<size_t>(qn));
  out.distances.resize(static_cast<size_t>(qn));

  struct Cand {
    double d2;
    int idx;
  };
  std::vector<Cand> cands;
  cands.reserve(static_cast<size_t>(sn));
  for (int i = 0; i < qn; ++i) {
    cands.clear();
    const int skip = self_index ? (*self_index)[static_cast<size_t>(i)] : -1;
    for (int j = 0; j < sn; ++j) {
      if (j == skip) continue;
      cands.push_back({dist2(query[i], source[j]), j});
    }
    auto cmp = [&source](const Cand& a, const Cand& b) {
      if (a.d2 != b.d2) return a.d2 < b.d2;
      const Vec3& pa = source[a.idx];
      const Vec3& pb = source[b.idx];
      if (pa != pb) return lex_less(pa, pb);
      return a.idx < b.idx;
    };
    std::partial_sort(cands.begin(), cands.begin() + k, cands.end(), cmp);
    auto& ids = out.indices[static_cast<size_t>(i)];
    auto& ds = out.distances[static_cast<size_t>(i)];
    ids.reserve(static_cast<size_t>(k));
    ds.reserve(static_cast<size_t>(k));
    for (int j = 0; j < k; ++j) {
      ids.push_back(cands[static_cast<size_t>(j)].idx);
      ds.push_back(std::sqrt(cands[static_cast<size_t>(j)].d2));
    }
  }
  return out;
}

std::vector<std::vector<Vec3>> group_subtract(const PointCloud& centroids,
                                              const PointCloud& source,
                                              const NeighborIndex& nbr) {
  if (static_cast<int>(nbr.indices.size()) != centroids.n())
    throw ShapeError("group_subtract: neighbor rows do not match centroid count");
  std::vector<std::vector<Vec3>> out(nbr.indices.size());
  for (size_t i = 0; i < nbr.indices.size(); ++i) {
    out[i].reserve(nbr.indices[i].size());
    for (int j : nbr.indices[i]) {
      if (j < 0 || j >= source.n())
        throw ShapeError("group_subtract: neighbor index " + std::to_string(j) +
                         " out of range");
      const Vec3& c = centroids[static_cast<int>(i)];
      const Vec3& p = source[j];
      out[i].push_back({c[0] - p[0], c[1] - p[1], c[2] - p[2]});
    }
  }
  return out;
}

std::vector<std::vector<double>> inverse_distance_interpolate(
    const PointCloud& p_pre, const std::vector<std::vector<double>>& x_pre,
    const NeighborIndex& nbr3) {
  if (nbr3.k != 3)
    throw ShapeError("inverse_distance_interpolate: need exactly 3 neighbors, got k=" +
                     std::to_string(nbr3.k));
  constexpr double kEps = 1e-8;
  std::vector<std::vector<double>> out(nbr3.indices.size());
  for (size_t i = 0; i < nbr3.indices.size(); ++i) {
    const size_t c = x_pre[static_cast<size_t>(nbr3.indices[i][0])].size();
    std::vector<double> acc(c, 0.0);
    double wsum = 0.0;
    for (int j = 0; j < 3; ++j) {
      const int src = nbr3.indices[i][static_cast<size_t>(j)];
      const double w = 1.0 / (dist(p_pre[static_cast<int>(i)], p_pre[src]) + kEps);
      wsum += w;
      const auto& f = x_pre[static_cast<size_t>(src)];
      for (size_t ch = 0; ch < c; ++ch) acc[ch] += w * f[ch];
    }
    for (double& v : acc) v /= wsum;
    out[i] = std::move(acc);
  }
  return out;
}

}  // namespace topgeo
