#include "topgeo/scene.hpp"

#include "topgeo/errors.hpp"

namespace topgeo {

SceneResult scene_recover(const TopGeoModel& model, const PointCloud& scene,
                          int patch_points, int multiplier) {
  if (patch_points < 64 || patch_points % 16 != 0)
    throw ShapeError("patch_points must be >= 64 and divisible by 16");
  if (multiplier < 1) throw ShapeError("multiplier must be >= 1");
  if (scene.n() < patch_points)
    throw ShapeError("scene has " + std::to_string(scene.n()) +
                     " points, needs at least " + std::to_string(patch_points));

  auto [norm_scene, scene_rec] = normalize_unit_sphere(scene);
  const int num_patch = (scene.n() / patch_points) * multiplier;
  const std::vector<int> seeds = fps(norm_scene, num_patch);

  SceneResult out;
  for (int s : seeds) {
    PointCloud seed_cloud;
    seed_cloud.points.push_back(norm_scene[s]);
    // self_index omitted so the seed itself lands in its own patch
    const NeighborIndex nbr = knn(seed_cloud, norm_scene, patch_points);
    PointCloud patch;
    patch.points.reserve(static_cast<size_t>(patch_points));
    for (int j : nbr.indices[0]) patch.points.push_back(norm_scene[j]);

    auto [norm_patch, patch_rec] = normalize_unit_sphere(patch);
    const RecoveryResult rec = model.recover(norm_patch);
    const PointCloud pred = denormalize(tensor_to_cloud(rec.r2), patch_rec);
    for (const auto& p : pred.points) out.merged.points.push_back(p);
    out.patches.push_back(denormalize(patch, scene_rec));
  }
  out.merged = denormalize(out.merged, scene_rec);
  return out;
}

}  // namespace topgeo
