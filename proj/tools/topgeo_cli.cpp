// Command-line surface for the point-cloud recovery pipeline.
// Exit codes: 0 success, 1 verification failure, 2 config error,
// 3 input-shape error, 4 data error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "topgeo/errors.hpp"
#include "topgeo/gradsuite.hpp"
#include "topgeo/io.hpp"
#include "topgeo/metrics.hpp"
#include "topgeo/model.hpp"
#include "topgeo/scene.hpp"
#include "topgeo/synth.hpp"
#include "topgeo/train.hpp"

namespace {

using namespace topgeo;

TopGeoModel load_model(const std::string& ckpt) {
  return TopGeoModel(load_checkpoint(ckpt));
}

void require_recoverable(const PointCloud& c) {
  if (c.n() < 64 || c.n() % 16 != 0)
    throw ShapeError("input has " + std::to_string(c.n()) +
                     " points; need a count divisible by 16 and >= 64");
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  TrainConfig cfg = TrainConfig::from_file(config_path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  const TrainResult res = train(cfg);
  std::cout << "trained " << res.log.size() << " steps, checkpoint at "
            << res.final_checkpoint << "\n";
  return 0;
}

int cmd_recover(const std::string& ckpt, const std::string& in,
                const std::string& out_dir, const std::string& emit) {
  const PointCloud raw = read_xyz(in);
  require_recoverable(raw);
  const TopGeoModel model = load_model(ckpt);
  auto [cloud, rec] = normalize_unit_sphere(raw);
  const RecoveryResult r = model.recover(cloud);
  std::filesystem::create_directories(out_dir);
  const Tensor* stages[3] = {&r.r0, &r.r1, &r.r2};
  const char* names[3] = {"r0", "r1", "r2"};
  for (int i = 0; i < 3; ++i) {
    if (emit.find(names[i]) == std::string::npos) continue;
    write_xyz(out_dir + "/" + names[i] + ".xyz",
              denormalize(tensor_to_cloud(*stages[i]), rec));
  }
  return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& in, const std::string& out) {
  const PointCloud raw = read_xyz(in);
  require_recoverable(raw);
  const TopGeoModel model = load_model(ckpt);
  auto [cloud, rec] = normalize_unit_sphere(raw);
  const DownResult d = model.down_preserve(cloud);
  write_xyz(out, denormalize(tensor_to_cloud(d.r0), rec));
  return 0;
}

int cmd_upsample(const std::string& ckpt, const std::string& in, const std::string& out) {
  const PointCloud raw = read_xyz(in);
  if (raw.n() < 17)
    throw ShapeError("upsampling needs at least 17 points, got " +
                     std::to_string(raw.n()));
  const TopGeoModel model = load_model(ckpt);
  auto [cloud, rec] = normalize_unit_sphere(raw);
  write_xyz(out, denormalize(tensor_to_cloud(model.upsample_only(cloud)), rec));
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& out_csv) {
  std::vector<std::string> files;
  if (std::filesystem::is_directory(data_dir))
    for (const auto& e : std::filesystem::directory_iterator(data_dir))
      if (e.path().extension() == ".xyz") files.push_back(e.path().string());
  if (files.empty()) throw DataError("no .xyz files in " + data_dir);
  std::sort(files.begin(), files.end());

  const TopGeoModel model = load_model(ckpt);
  std::vector<std::pair<std::string, PointCloud>> data;
  for (const auto& f : files) {
    PointCloud raw = read_xyz(f);
    require_recoverable(raw);
    data.emplace_back(std::filesystem::path(f).filename().string(),
                      normalize_unit_sphere(raw).first);
  }
  const EvalResult res = evaluate(model, data);

  std::ofstream out(out_csv);
  if (!out) throw DataError("cannot write " + out_csv);
  out << "file,cd_e3,hd_e2,emd_e2,sample_cd_e3,emd_mode\n";
  char buf[256];
  for (const auto& r : res.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%s\n", r.name.c_str(),
                  r.full.cd * 1e3, r.full.hd * 1e2, r.full.emd * 1e2,
                  r.sample_cd * 1e3,
                  r.full.emd_mode == EmdMode::exact ? "exact" : "approx");
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,%.9g,%.9g,%.9g,%.9g,-\n", res.mean_cd * 1e3,
                res.mean_hd * 1e2, res.mean_emd * 1e2, res.mean_sample_cd * 1e3);
  out << buf;
  return 0;
}

int cmd_scene(const std::string& ckpt, const std::string& in, const std::string& out,
              int patch_points, int multiplier) {
  const PointCloud scene = read_xyz(in);
  const TopGeoModel model = load_model(ckpt);
  const SceneResult res = scene_recover(model, scene, patch_points, multiplier);
  write_xyz(out, res.merged);
  std::cout << res.patches.size() << " patches, " << res.merged.n()
            << " merged points\n";
  return 0;
}

int cmd_gradcheck(uint64_t seed) {
  const GradSuiteReport rep = run_grad_suite(seed);
  for (const auto& e : rep.entries) {
    std::printf("%-32s max_rel_err %.3e (tol %.0e) %s\n", e.name.c_str(),
                e.max_rel_err, e.threshold, e.pass() ? "PASS" : "FAIL");
  }
  if (!rep.all_pass()) {
    std::printf("FAILED:");
    for (const auto& f : rep.failures()) std::printf(" %s", f.c_str());
    std::printf("\n");
    return 1;
  }
  std::printf("all %zu gradient checks passed\n", rep.entries.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point cloud recovery: differentiable downsampling + restoration"};
  app.require_subcommand(1);

  std::string config_path, ckpt, in, out, emit = "r0,r1,r2", data_dir;
  int patch_points = 2048, multiplier = 4;
  uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train", "train from a key=value config");
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--out", out);

  auto* recover_cmd = app.add_subcommand("recover", "downsample then restore a cloud");
  recover_cmd->add_option("--ckpt", ckpt)->required();
  recover_cmd->add_option("--in", in)->required();
  recover_cmd->add_option("--out", out)->required();
  recover_cmd->add_option("--emit", emit);

  auto* sample_cmd = app.add_subcommand("sample", "emit the learned N/4 sampling only");
  sample_cmd->add_option("--ckpt", ckpt)->required();
  sample_cmd->add_option("--in", in)->required();
  sample_cmd->add_option("--out", out)->required();

  auto* upsample_cmd = app.add_subcommand("upsample", "4x upsample a sparse cloud");
  upsample_cmd->add_option("--ckpt", ckpt)->required();
  upsample_cmd->add_option("--in", in)->required();
  upsample_cmd->add_option("--out", out)->required();

  auto* eval_cmd = app.add_subcommand("eval", "metric sweep over a directory");
  eval_cmd->add_option("--ckpt", ckpt)->required();
  eval_cmd->add_option("--data", data_dir)->required();
  eval_cmd->add_option("--out", out)->required();

  auto* scene_cmd = app.add_subcommand("scene", "patch-wise scene recovery");
  scene_cmd->add_option("--ckpt", ckpt)->required();
  scene_cmd->add_option("--in", in)->required();
  scene_cmd->add_option("--out", out)->required();
  scene_cmd->add_option("--patch-points", patch_points);
  scene_cmd->add_option("--patch-multiplier", multiplier);

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad_cmd->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, out);
    if (*recover_cmd) return cmd_recover(ckpt, in, out, emit);
    if (*sample_cmd) return cmd_sample(ckpt, in, out);
    if (*upsample_cmd) return cmd_upsample(ckpt, in, out);
    if (*eval_cmd) return cmd_eval(ckpt, data_dir, out);
    if (*scene_cmd) return cmd_scene(ckpt, in, out, patch_points, multiplier);
    if (*grad_cmd) return cmd_gradcheck(seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
