#pragma once

#include <map>
#include <string>

#include "topgeo/geometry.hpp"
#include "topgeo/params.hpp"

namespace topgeo {

// ASCII XYZ: one "x y z" line per point, '#' comment lines allowed.
// Writes 9 significant digits so round-trips stay within 1e-6.
PointCloud read_xyz(const std::string& path);
void write_xyz(const std::string& path, const PointCloud& cloud);

// Binary checkpoint: magic "TGFC", u32 version, hyperparameter record,
// then sorted name -> shape -> little-endian f32 payload entries.
void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

// Flat key=value config text; unknown keys are hard errors.
std::map<std::string, std::string> parse_config(const std::string& path);

}  // namespace topgeo
