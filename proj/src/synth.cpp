#include "topgeo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "topgeo/errors.hpp"

namespace topgeo {

namespace {

constexpr double kPi = 3.14159265358979323846;

double param_or(const std::vector<double>& p, size_t i, double dflt) {
  return i < p.size() ? p[i] : dflt;
}

// partial Fisher-Yates draw of n distinct entries
std::vector<int> draw_without_replacement(std::vector<int> pool, int n, Rng& rng) {
  for (int i = 0; i < n; ++i) {
    const int j = i + rng.uniform_int(static_cast<int>(pool.size()) - i);
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(n));
  return pool;
}

PointCloud sample_sphere(int n, double radius, Rng& rng) {
  PointCloud c;
  c.points.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    c.points.push_back({radius * s * std::cos(phi), radius * s * std::sin(phi), radius * z});
  }
  return c;
}

PointCloud sample_torus(int n, double major, double minor, Rng& rng) {
  PointCloud c;
  c.points.reserve(static_cast<size_t>(n));
  while (c.n() < n) {
    const double u = rng.uniform(0.0, 2.0 * kPi);
    const double v = rng.uniform(0.0, 2.0 * kPi);
    // area element is proportional to major + minor*cos(v)
    if (rng.uniform() * (major + minor) > major + minor * std::cos(v)) continue;
    const double w = major + minor * std::cos(v);
    c.points.push_back({w * std::cos(u), w * std::sin(u), minor * std::sin(v)});
  }
  return c;
}

PointCloud sample_box(int n, double a, double b, double h, Rng& rng) {
  const double areas[3] = {b * h, a * h, a * b};  // x-, y-, z-normal face pairs
  const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
  PointCloud c;
  c.points.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double t = rng.uniform(0.0, total);
    int axis = 0;
    double sign = 1.0;
    for (axis = 0; axis < 3; ++axis) {
      if (t < 2.0 * areas[axis]) {
        sign = t < areas[axis] ? -1.0 : 1.0;
        break;
      }
      t -= 2.0 * areas[axis];
    }
    if (axis == 3) axis = 2;
    const double half[3] = {a / 2.0, b / 2.0, h / 2.0};
    Vec3 p;
    p[static_cast<size_t>(axis)] = sign * half[axis];
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    p[static_cast<size_t>(u)] = rng.uniform(-half[u], half[u]);
    p[static_cast<size_t>(v)] = rng.uniform(-half[v], half[v]);
    c.points.push_back(p);
  }
  return c;
}

PointCloud sample_cylinder(int n, double radius, double height, Rng& rng) {
  const double lateral = 2.0 * kPi * radius * height;
  const double cap = kPi * radius * radius;
  const double total = lateral + 2.0 * cap;
  PointCloud c;
  c.points.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = rng.uniform(0.0, total);
    if (t < lateral) {
      const double phi = rng.uniform(0.0, 2.0 * kPi);
      const double z = rng.uniform(-height / 2.0, height / 2.0);
      c.points.push_back({radius * std::cos(phi), radius * std::sin(phi), z});
    } else {
      const double z = t < lateral + cap ? -height / 2.0 : height / 2.0;
      const double r = radius * std::sqrt(rng.uniform());
      const double phi = rng.uniform(0.0, 2.0 * kPi);
      c.points.push_back({r * std::cos(phi), r * std::sin(phi), z});
    }
  }
  return c;
}

PointCloud sample_two_planes(int n, double side, double hole_r, double gap, Rng& rng) {
  PointCloud c;
  c.points.reserve(static_cast<size_t>(n));
  while (c.n() < n) {
    const double x = rng.uniform(-side / 2.0, side / 2.0);
    const double y = rng.uniform(-side / 2.0, side / 2.0);
    if (x * x + y * y < hole_r * hole_r) continue;
    const double z = rng.uniform() < 0.5 ? -gap / 2.0 : gap / 2.0;
    c.points.push_back({x, y, z});
  }
  return c;
}

PointCloud sample_helix(int n, double radius, double pitch, double turns, double tube_r,
                        Rng& rng) {
  PointCloud c;
  c.points.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = rng.uniform(0.0, 2.0 * kPi * turns);
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    const Vec3 center{radius * std::cos(t), radius * std::sin(t), pitch * t / (2.0 * kPi)};
    // tube frame: radial direction and the unit vector orthogonal to both it
    // and the curve tangent
    const Vec3 e1{std::cos(t), std::sin(t), 0.0};
    Vec3 tangent{-radius * std::sin(t), radius * std::cos(t), pitch / (2.0 * kPi)};
    const double tn = std::sqrt(tangent[0] * tangent[0] + tangent[1] * tangent[1] +
                                tangent[2] * tangent[2]);
    for (double& v : tangent) v /= tn;
    const Vec3 e2{tangent[1] * e1[2] - tangent[2] * e1[1],
                  tangent[2] * e1[0] - tangent[0] * e1[2],
                  tangent[0] * e1[1] - tangent[1] * e1[0]};
    c.points.push_back({center[0] + tube_r * (std::cos(theta) * e1[0] + std::sin(theta) * e2[0]),
                        center[1] + tube_r * (std::cos(theta) * e1[1] + std::sin(theta) * e2[1]),
                        center[2] + tube_r * (std::cos(theta) * e1[2] + std::sin(theta) * e2[2])});
  }
  return c;
}

}  // namespace

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "sphere") return ShapeKind::sphere;
  if (s == "torus") return ShapeKind::torus;
  if (s == "box_surface") return ShapeKind::box_surface;
  if (s == "cylinder") return ShapeKind::cylinder;
  if (s == "two_planes_with_hole") return ShapeKind::two_planes_with_hole;
  if (s == "helix") return ShapeKind::helix;
  throw ConfigError("unknown shape kind: " + s);
}

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::torus: return "torus";
    case ShapeKind::box_surface: return "box_surface";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::two_planes_with_hole: return "two_planes_with_hole";
    case ShapeKind::helix: return "helix";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  if (s == "uniform") return Regime::uniform;
  if (s == "random") return Regime::random;
  if (s == "partial") return Regime::partial;
  throw ConfigError("unknown regime: " + s);
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::uniform: return "uniform";
    case Regime::random: return "random";
    case Regime::partial: return "partial";
  }
  return "?";
}

PointCloud gen_shape_raw(const ShapeSpec& spec) {
  if (spec.n < 4 || spec.n % 4 != 0)
    throw ConfigError("gen_shape: n must be positive and divisible by 4, got " +
                      std::to_string(spec.n));
  for (double p : spec.params)
    if (!(p > 0.0)) throw ConfigError("gen_shape: shape params must be positive");
  Rng rng(spec.seed * 0x5851f42d4c957f2dULL + static_cast<uint64_t>(spec.kind) + 1);
  const auto& p = spec.params;
  switch (spec.kind) {
    case ShapeKind::sphere:
      return sample_sphere(spec.n, param_or(p, 0, 1.0), rng);
    case ShapeKind::torus: {
      const double major = param_or(p, 0, 1.0), minor = param_or(p, 1, 0.3);
      if (minor >= major) throw ConfigError("gen_shape: torus minor radius must be < major");
      return sample_torus(spec.n, major, minor, rng);
    }
    case ShapeKind::box_surface:
      return sample_box(spec.n, param_or(p, 0, 1.0), param_or(p, 1, 0.7), param_or(p, 2, 0.4),
                        rng);
    case ShapeKind::cylinder:
      return sample_cylinder(spec.n, param_or(p, 0, 0.4), param_or(p, 1, 1.2), rng);
    case ShapeKind::two_planes_with_hole: {
      const double side = param_or(p, 0, 1.0), hole = param_or(p, 1, 0.25);
      if (hole >= side / 2.0)
        throw ConfigError("gen_shape: hole radius must be < half the plane side");
      return sample_two_planes(spec.n, side, hole, param_or(p, 2, 0.5), rng);
    }
    case ShapeKind::helix:
      return sample_helix(spec.n, param_or(p, 0, 1.0), param_or(p, 1, 0.5),
                          param_or(p, 2, 2.0), param_or(p, 3, 0.12), rng);
  }
  throw ConfigError("gen_shape: unhandled kind");
}

PointCloud gen_shape(const ShapeSpec& spec) {
  return normalize_unit_sphere(gen_shape_raw(spec)).first;
}

PointCloud apply_regime(const PointCloud& cloud, Regime regime, int n, Rng& rng) {
  if (cloud.n() < n)
    throw ShapeError("apply_regime: source has " + std::to_string(cloud.n()) +
                     " points, need " + std::to_string(n));
  PointCloud out;
  out.points.reserve(static_cast<size_t>(n));
  switch (regime) {
    case Regime::uniform: {
      std::vector<int> pool(static_cast<size_t>(cloud.n()));
      std::iota(pool.begin(), pool.end(), 0);
      for (int i : draw_without_replacement(std::move(pool), n, rng))
        out.points.push_back(cloud[i]);
      break;
    }
    case Regime::random: {
      // octant density bias drawn once
      double w[8];
      for (double& v : w) v = rng.uniform(0.5, 2.0);
      std::vector<double> cum(static_cast<size_t>(cloud.n()));
      double acc = 0.0;
      for (int i = 0; i < cloud.n(); ++i) {
        const Vec3& p = cloud[i];
        const int oct = (p[0] >= 0.0 ? 1 : 0) | (p[1] >= 0.0 ? 2 : 0) | (p[2] >= 0.0 ? 4 : 0);
        acc += w[oct];
        cum[static_cast<size_t>(i)] = acc;
      }
      for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(0.0, acc);
        const auto it = std::lower_bound(cum.begin(), cum.end(), t);
        out.points.push_back(cloud[static_cast<int>(it - cum.begin())]);
      }
      break;
    }
    case Regime::partial: {
      for (int attempt = 0;; ++attempt) {
        if (attempt >= 16)
          throw DataError("apply_regime: could not find a valid half-space cap in 16 tries");
        // random plane direction; cut depth tuned so the cap removes 20-40%
        const double z = rng.uniform(-1.0, 1.0);
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        const Vec3 dir{s * std::cos(phi), s * std::sin(phi), z};
        std::vector<double> proj(static_cast<size_t>(cloud.n()));
        for (int i = 0; i < cloud.n(); ++i)
          proj[static_cast<size_t>(i)] =
              dir[0] * cloud[i][0] + dir[1] * cloud[i][1] + dir[2] * cloud[i][2];
        std::vector<double> sorted(proj);
        std::sort(sorted.begin(), sorted.end());
        const double frac = rng.uniform(0.2, 0.4);
        const double cut = sorted[static_cast<size_t>((1.0 - frac) * cloud.n())];
        std::vector<int> keep;
        for (int i = 0; i < cloud.n(); ++i)
          if (proj[static_cast<size_t>(i)] < cut) keep.push_back(i);
        const double removed = 1.0 - static_cast<double>(keep.size()) / cloud.n();
        if (removed < 0.2 || removed > 0.4 || static_cast<int>(keep.size()) < n) continue;
        for (int i : draw_without_replacement(std::move(keep), n, rng))
          out.points.push_back(cloud[i]);
        break;
      }
      break;
    }
  }
  return out;
}

PointCloud augment(const PointCloud& cloud, Rng& rng) {
  PointCloud out = cloud;
  if (rng.uniform() < 0.5) {  // mirror across a random coordinate plane
    const int axis = rng.uniform_int(3);
    for (auto& p : out.points) p[static_cast<size_t>(axis)] = -p[static_cast<size_t>(axis)];
  }
  if (rng.uniform() < 0.5) {  // uniform scale
    const double s = rng.uniform(0.8, 1.2);
    for (auto& p : out.points)
      for (double& v : p) v *= s;
  }
  if (rng.uniform() < 0.5) {  // yaw rotation
    const double a = rng.uniform(0.0, 2.0 * kPi);
    const double ca = std::cos(a), sa = std::sin(a);
    for (auto& p : out.points) {
      const double x = p[0] * ca - p[1] * sa;
      const double y = p[0] * sa + p[1] * ca;
      p[0] = x;
      p[1] = y;
    }
  }
  return normalize_unit_sphere(out).first;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest not readable: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind, regime;
    uint64_t seed;
    int n;
    if (!(ls >> kind >> seed >> regime >> n))
      throw DataError("manifest line not parseable: " + line);
    out.push_back({shape_kind_from_string(kind), seed, regime_from_string(regime), n});
  }
  if (out.empty()) throw DataError("manifest is empty: " + path);
  return out;
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("manifest not writable: " + path);
  for (const auto& e : entries)
    out << to_string(e.kind) << " " << e.seed << " " << to_string(e.regime) << " " << e.n
        << "\n";
}

PointCloud realize_entry(const ManifestEntry& e) {
  // generate a denser base so the regimes have points to draw from
  ShapeSpec spec;
  spec.kind = e.kind;
  spec.n = 4 * e.n;
  spec.seed = e.seed;
  PointCloud base = gen_shape(spec);
  Rng rng(e.seed ^ 0xa5a5a5a5deadbeefULL);
  PointCloud sampled = apply_regime(base, e.regime, e.n, rng);
  return normalize_unit_sphere(sampled).first;
}

}  // namespace topgeo
