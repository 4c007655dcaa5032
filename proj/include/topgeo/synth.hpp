#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topgeo/geometry.hpp"
#include "topgeo/params.hpp"

namespace topgeo {

enum class ShapeKind { sphere, torus, box_surface, cylinder, two_planes_with_hole, helix };

ShapeKind shape_kind_from_string(const std::string& s);
std::string to_string(ShapeKind k);

struct ShapeSpec {
  ShapeKind kind = ShapeKind::sphere;
  std::vector<double> params;  // per-kind scalars; empty means defaults
  int n = 256;                 // target point count, divisible by 4
  uint64_t seed = 0;
};

enum class Regime { uniform, random, partial };

Regime regime_from_string(const std::string& s);
std::string to_string(Regime r);

// area-weighted surface samples before normalization; exposed for analytic
// surface-membership checks
PointCloud gen_shape_raw(const ShapeSpec& spec);
// unit-sphere-normalized result of gen_shape_raw
PointCloud gen_shape(const ShapeSpec& spec);

// uniform: plain index resample; random: i.i.d. draw with per-octant density
// weights drawn once; partial: drop a random half-space cap covering 20-40%
// of points, then resample to n. Output count equals n.
PointCloud apply_regime(const PointCloud& cloud, Regime regime, int n, Rng& rng);

// random mirroring / scaling / yaw rotation, each with probability 0.5,
// then re-normalized to the unit sphere
PointCloud augment(const PointCloud& cloud, Rng& rng);

struct ManifestEntry {
  ShapeKind kind;
  uint64_t seed;
  Regime regime;
  int n;
};

// one text line per sample: "kind seed regime n"
std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// regenerate the normalized training cloud for a manifest entry
PointCloud realize_entry(const ManifestEntry& e);

}  // namespace topgeo
