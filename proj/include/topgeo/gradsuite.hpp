#pragma once

#include <string>
#include <vector>

#include "topgeo/model.hpp"

namespace topgeo {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double threshold = 0.0;

  bool pass() const { return max_rel_err <= threshold; }
};

struct GradSuiteReport {
  std::vector<GradCheckEntry> entries;

  bool all_pass() const;
  std::vector<std::string> failures() const;
};

// Central-difference check of the loss against one named parameter tensor,
// sampling at most max_coords coordinates at a fixed stride.
double grad_check_param(TopGeoModel& model, const std::string& name,
                        const std::function<Tensor(const TopGeoModel&)>& forward,
                        double h, int max_coords);

// Primitives (rel. 1e-4), Chamfer, attention blocks and the end-to-end
// combined loss on a 64-point cloud (rel. 1e-3).
GradSuiteReport run_grad_suite(uint64_t seed);

}  // namespace topgeo
