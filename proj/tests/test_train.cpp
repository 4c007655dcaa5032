#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "topgeo/errors.hpp"
#include "topgeo/io.hpp"
#include "topgeo/train.hpp"

using namespace topgeo;

namespace {

std::filesystem::path tmpdir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

TrainConfig tiny_config(const std::filesystem::path& dir) {
  TrainConfig cfg;
  cfg.hyper.n = 64;
  cfg.hyper.k = 4;
  cfg.hyper.c1 = 6;
  cfg.hyper.c2 = 6;
  cfg.hyper.c3 = 8;
  cfg.hyper.c = 6;
  cfg.hyper.m = 6;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.max_steps = 5;
  cfg.seed = 12;
  cfg.out_dir = (dir / "run").string();
  cfg.manifest = (dir / "manifest.txt").string();
  save_manifest(cfg.manifest, {
                                  {ShapeKind::sphere, 1, Regime::uniform, 64},
                                  {ShapeKind::torus, 2, Regime::uniform, 64},
                                  {ShapeKind::cylinder, 3, Regime::partial, 64},
                                  {ShapeKind::helix, 4, Regime::random, 64},
                              });
  return cfg;
}

}  // namespace

TEST_CASE("lr_schedule") {
  TrainConfig cfg;
  cfg.manifest = "x";
  CHECK(lr_schedule(0, cfg) == doctest::Approx(0.005));
  CHECK(lr_schedule(30, cfg) == doctest::Approx(0.0025));
  CHECK(lr_schedule(119, cfg) == doctest::Approx(0.000625));
  CHECK_THROWS_AS(lr_schedule(-1, cfg), ConfigError);
}

TEST_CASE("adam_step") {
  Hyper hp;
  hp.k = 1;
  hp.c1 = 1;
  hp.c2 = 1;
  hp.c3 = 1;
  hp.c = 1;
  hp.m = 1;
  hp.n = 4;

  // zero gradient leaves parameters unchanged
  {
    ParamStore ps(hp);
    Tensor w = ps.add("w", {2}, {1.0, -2.0});
    AdamState st;
    adam_step(ps, st, 0.1);
    CHECK(w.values()[0] == doctest::Approx(1.0));
    CHECK(w.values()[1] == doctest::Approx(-2.0));
  }

  // first step moves by ~lr in the gradient's direction (bias-corrected)
  {
    ParamStore ps(hp);
    Tensor w = ps.add("w", {1}, {1.0});
    w.node()->grad = {0.37};
    AdamState st;
    adam_step(ps, st, 0.1);
    CHECK(w.values()[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-4));
  }

  // quadratic f(w) = w^2 from w0=1: 200 steps at lr 0.1 converge near 0
  {
    ParamStore ps(hp);
    Tensor w = ps.add("w", {1}, {1.0});
    AdamState st;
    for (int i = 0; i < 200; ++i) {
      w.node()->grad = {2.0 * w.values()[0]};
      adam_step(ps, st, 0.1);
    }
    CHECK(std::abs(w.values()[0]) < 1e-2);
  }
}

TEST_CASE("train smoke run") {
  const auto dir = tmpdir("topgeo_train_smoke");
  const TrainConfig cfg = tiny_config(dir);
  const TrainResult res = train(cfg);

  REQUIRE(res.log.size() == 5);  // capped by max_steps
  CHECK(std::filesystem::exists(res.final_checkpoint));
  CHECK(std::filesystem::exists(dir / "run" / "train.csv"));
  for (const auto& row : res.log) {
    CHECK(std::isfinite(row.total));
    CHECK(std::abs(row.total - (cfg.hyper.lambda * row.geo + row.top)) < 1e-9);
    CHECK(row.lr == doctest::Approx(0.005));
  }

  // loaded checkpoint evaluates
  TopGeoModel model(load_checkpoint(res.final_checkpoint));
  std::vector<std::pair<std::string, PointCloud>> data;
  data.emplace_back("s", realize_entry({ShapeKind::sphere, 9, Regime::uniform, 64}));
  const EvalResult ev = evaluate(model, data);
  REQUIRE(ev.rows.size() == 1);
  CHECK(ev.rows[0].full.cd >= 0.0);
  CHECK(ev.rows[0].full.emd_mode == EmdMode::exact);
  CHECK(ev.mean_cd == doctest::Approx(ev.rows[0].full.cd));

  std::filesystem::remove_all(dir);
}

TEST_CASE("training is bit-deterministic") {
  const auto dir1 = tmpdir("topgeo_train_det1");
  const auto dir2 = tmpdir("topgeo_train_det2");
  TrainConfig c1 = tiny_config(dir1);
  TrainConfig c2 = tiny_config(dir2);
  const TrainResult r1 = train(c1);
  const TrainResult r2 = train(c2);
  CHECK(slurp(r1.final_checkpoint) == slurp(r2.final_checkpoint));
  // log rows identical except the wall-clock column
  REQUIRE(r1.log.size() == r2.log.size());
  for (size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].geo == r2.log[i].geo);
    CHECK(r1.log[i].top == r2.log[i].top);
    CHECK(r1.log[i].total == r2.log[i].total);
    CHECK(r1.log[i].lr == r2.log[i].lr);
  }
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("config file parsing surfaces bad keys") {
  const auto dir = tmpdir("topgeo_train_cfg");
  const auto path = dir / "cfg.txt";
  {
    std::ofstream out(path);
    out << "n=64\nmanifest=m.txt\nnot_a_key=1\n";
  }
  CHECK_THROWS_AS(TrainConfig::from_file(path.string()), ConfigError);
  {
    std::ofstream out(path);
    out << "n=64\nmanifest=m.txt\nepochs=zero\n";
  }
  CHECK_THROWS_AS(TrainConfig::from_file(path.string()), ConfigError);
  {
    std::ofstream out(path);
    out << "n=62\nmanifest=m.txt\n";
  }
  CHECK_THROWS_AS(TrainConfig::from_file(path.string()), ConfigError);  // not /4
  std::filesystem::remove_all(dir);
}
