#pragma once

#include "topgeo/geometry.hpp"
#include "topgeo/model.hpp"

namespace topgeo {

struct SceneResult {
  PointCloud merged;              // all patch predictions, seed order, scene frame
  std::vector<PointCloud> patches; // raw patches in the scene's original frame
};

// Scene-scale recovery: normalize the scene, FPS
// floor(len / patch_points) * multiplier seed points, gather a
// patch_points-sized kNN patch (self included) around each seed, then
// normalize / recover / denormalize each patch and concatenate. Patch
// overlap is retained, so the merged cloud is larger than the input
// whenever multiplier > 1.
SceneResult scene_recover(const TopGeoModel& model, const PointCloud& scene,
                          int patch_points = 2048, int multiplier = 4);

}  // namespace topgeo
