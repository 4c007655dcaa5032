#include "topgeo/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "topgeo/errors.hpp"

namespace topgeo {

PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open xyz file: " + path);
  PointCloud cloud;
  std::string line;
  while (std::getline(in, line)) {
    size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ls(line.substr(start));
    double x, y, z;
    if (!(ls >> x >> y >> z)) throw DataError("bad xyz line in " + path + ": " + line);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      throw DataError("non-finite coordinate in " + path);
    cloud.points.push_back({x, y, z});
  }
  if (cloud.n() == 0) throw DataError("xyz file has no points: " + path);
  return cloud;
}

void write_xyz(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write xyz file: " + path);
  char buf[96];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
    out << buf;
  }
}

namespace {

constexpr char kMagic[4] = {'T', 'G', 'F', 'C'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  put<uint32_t>(out, kVersion);
  const Hyper& h = params.meta();
  for (int v : {h.n, h.k, h.c1, h.c2, h.c3, h.c, h.m, h.r}) put<int32_t>(out, v);
  put<double>(out, h.lambda);
  put<uint32_t>(out, static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params.entries()) {
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint32_t>(out, static_cast<uint32_t>(t.rank()));
    for (int d : t.shape()) put<uint32_t>(out, static_cast<uint32_t>(d));
    for (double v : t.values()) put<float>(out, static_cast<float>(v));
  }
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  const uint32_t version = get<uint32_t>(in, path);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  Hyper h;
  h.n = get<int32_t>(in, path);
  h.k = get<int32_t>(in, path);
  h.c1 = get<int32_t>(in, path);
  h.c2 = get<int32_t>(in, path);
  h.c3 = get<int32_t>(in, path);
  h.c = get<int32_t>(in, path);
  h.m = get<int32_t>(in, path);
  h.r = get<int32_t>(in, path);
  h.lambda = get<double>(in, path);
  ParamStore ps(h);
  const uint32_t count = get<uint32_t>(in, path);
  for (uint32_t e = 0; e < count; ++e) {
    const uint32_t len = get<uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw DataError("truncated checkpoint: " + path);
    const uint32_t rank = get<uint32_t>(in, path);
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(get<uint32_t>(in, path));
    std::vector<double> values(static_cast<size_t>(numel(shape)));
    for (double& v : values) v = static_cast<double>(get<float>(in, path));
    ps.add(name, std::move(shape), std::move(values));
  }
  return ps;
}

std::map<std::string, std::string> parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    const size_t eq = line.find('=', start);
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value, got: " +
                        line);
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t\r");
      const size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(start, eq - start));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    if (out.count(key))
      throw ConfigError(path + ": duplicate key " + key);
    out[key] = value;
  }
  return out;
}

}  // namespace topgeo
