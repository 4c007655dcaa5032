#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "topgeo/errors.hpp"
#include "topgeo/io.hpp"
#include "topgeo/model.hpp"

using namespace topgeo;

namespace {

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("xyz round trip within 1e-6") {
  Rng rng(7);
  PointCloud c;
  for (int i = 0; i < 100; ++i)
    c.points.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)});
  const auto path = tmp("topgeo_io_test.xyz");
  write_xyz(path.string(), c);
  const PointCloud back = read_xyz(path.string());
  REQUIRE(back.n() == c.n());
  for (int i = 0; i < c.n(); ++i)
    for (int d = 0; d < 3; ++d) CHECK(std::abs(back[i][d] - c[i][d]) < 1e-6);
  std::filesystem::remove(path);
}

TEST_CASE("xyz parsing") {
  const auto path = tmp("topgeo_io_comments.xyz");
  {
    std::ofstream out(path);
    out << "# a comment line\n  1 2 3\n\n4 5 6\n";
  }
  const PointCloud c = read_xyz(path.string());
  REQUIRE(c.n() == 2);
  CHECK(c[0] == Vec3{1, 2, 3});
  CHECK(c[1] == Vec3{4, 5, 6});
  std::filesystem::remove(path);

  CHECK_THROWS_AS(read_xyz("/nonexistent/cloud.xyz"), DataError);

  const auto bad = tmp("topgeo_io_bad.xyz");
  {
    std::ofstream out(bad);
    out << "1 2 not_a_number\n";
  }
  CHECK_THROWS_AS(read_xyz(bad.string()), DataError);
  std::filesystem::remove(bad);

  const auto empty = tmp("topgeo_io_empty.xyz");
  {
    std::ofstream out(empty);
    out << "# nothing\n";
  }
  CHECK_THROWS_AS(read_xyz(empty.string()), DataError);
  std::filesystem::remove(empty);
}

TEST_CASE("checkpoint round trip is bit exact in f32") {
  Hyper hp;
  hp.n = 64;
  hp.k = 4;
  hp.c1 = 6;
  hp.c2 = 6;
  hp.c3 = 6;
  hp.c = 6;
  hp.m = 6;
  TopGeoModel model(hp, 31);
  const auto path = tmp("topgeo_ckpt_test.tgfc");
  save_checkpoint(path.string(), model.params());
  const ParamStore loaded = load_checkpoint(path.string());

  REQUIRE(loaded.size() == model.params().size());
  CHECK(loaded.meta().n == hp.n);
  CHECK(loaded.meta().c3 == hp.c3);
  CHECK(loaded.meta().lambda == hp.lambda);
  for (const auto& [name, t] : model.params().entries()) {
    REQUIRE(loaded.contains(name));
    const Tensor& lt = loaded.at(name);
    REQUIRE(lt.shape() == t.shape());
    for (size_t i = 0; i < t.values().size(); ++i)
      CHECK(lt.values()[i] == double(float(t.values()[i])));
  }

  // saving the loaded store reproduces identical bytes
  const auto path2 = tmp("topgeo_ckpt_test2.tgfc");
  save_checkpoint(path2.string(), loaded);
  CHECK(slurp(path) == slurp(path2));

  // a loaded model runs
  TopGeoModel view(loaded);
  CHECK(view.hyper().c1 == hp.c1);

  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("checkpoint rejects unknown formats") {
  const auto path = tmp("topgeo_ckpt_bad.tgfc");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), DataError);
  {
    std::ofstream out(path, std::ios::binary);
    const uint32_t version = 999;
    out << "TGFC";
    out.write(reinterpret_cast<const char*>(&version), 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.tgfc"), DataError);
}

TEST_CASE("parse_config") {
  const auto path = tmp("topgeo_cfg_test.txt");
  {
    std::ofstream out(path);
    out << "# comment\nlr0 = 0.005\nepochs=3\n  seed = 9\n";
  }
  const auto kv = parse_config(path.string());
  CHECK(kv.at("lr0") == "0.005");
  CHECK(kv.at("epochs") == "3");
  CHECK(kv.at("seed") == "9");
  std::filesystem::remove(path);

  CHECK_THROWS_AS(parse_config("/nonexistent/cfg.txt"), ConfigError);

  const auto bad = tmp("topgeo_cfg_bad.txt");
  {
    std::ofstream out(bad);
    out << "no_equals_sign_here\n";
  }
  CHECK_THROWS_AS(parse_config(bad.string()), ConfigError);
  {
    std::ofstream out(bad);
    out << "a=1\na=2\n";
  }
  CHECK_THROWS_AS(parse_config(bad.string()), ConfigError);
  std::filesystem::remove(bad);
}
