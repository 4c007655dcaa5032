#include "topgeo/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "topgeo/errors.hpp"
#include "topgeo/io.hpp"

namespace topgeo {

void TrainConfig::validate() const {
  hyper.validate();
  if (lr0 <= 0.0) throw ConfigError("lr0 must be positive");
  if (decay_factor <= 0.0) throw ConfigError("decay_factor must be positive");
  if (decay_every_epochs <= 0) throw ConfigError("decay_every_epochs must be positive");
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (max_steps < 0) throw ConfigError("max_steps must be nonnegative");
  if (hyper.n % 4 != 0) throw ConfigError("n must be divisible by 4");
  if (manifest.empty()) throw ConfigError("manifest path required");
}

namespace {

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for key " + key + ": " + v);
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad number for key " + key + ": " + v);
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad seed for key " + key + ": " + v);
  }
}

}  // namespace

TrainConfig TrainConfig::from_file(const std::string& path) {
  TrainConfig cfg;
  for (const auto& [key, value] : parse_config(path)) {
    if (key == "n") cfg.hyper.n = to_int(key, value);
    else if (key == "k") cfg.hyper.k = to_int(key, value);
    else if (key == "c1") cfg.hyper.c1 = to_int(key, value);
    else if (key == "c2") cfg.hyper.c2 = to_int(key, value);
    else if (key == "c3") cfg.hyper.c3 = to_int(key, value);
    else if (key == "c") cfg.hyper.c = to_int(key, value);
    else if (key == "m") cfg.hyper.m = to_int(key, value);
    else if (key == "r") cfg.hyper.r = to_int(key, value);
    else if (key == "lambda") cfg.hyper.lambda = to_double(key, value);
    else if (key == "lr0") cfg.lr0 = to_double(key, value);
    else if (key == "decay_factor") cfg.decay_factor = to_double(key, value);
    else if (key == "decay_every_epochs") cfg.decay_every_epochs = to_int(key, value);
    else if (key == "epochs") cfg.epochs = to_int(key, value);
    else if (key == "batch_size") cfg.batch_size = to_int(key, value);
    else if (key == "max_steps") cfg.max_steps = to_int(key, value);
    else if (key == "manifest") cfg.manifest = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "seed") cfg.seed = to_u64(key, value);
    else if (key == "augment") cfg.augment = to_int(key, value) != 0;
    else throw ConfigError(path + ": unknown config key: " + key);
  }
  cfg.validate();
  return cfg;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ConfigError("epoch must be nonnegative");
  return cfg.lr0 * std::pow(cfg.decay_factor, epoch / cfg.decay_every_epochs);
}

void adam_step(ParamStore& params, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (auto& [name, t] : params.entries()) {
    auto& node = *t.node();
    const size_t n = node.values.size();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(n, 0.0);
    if (v.empty()) v.assign(n, 0.0);
    if (m.size() != n || v.size() != n)
      throw ShapeError("adam state mismatch for " + name);
    const bool has_grad = node.grad.size() == n;
    for (size_t i = 0; i < n; ++i) {
      const double g = has_grad ? node.grad[i] : 0.0;
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      node.values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void write_train_csv(const std::string& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write log: " + path);
  out << "step,epoch,lr,geo,top,total,wall_ms\n";
  char buf[192];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.17g,%.17g,%.17g,%.3f\n", r.step,
                  r.epoch, r.lr, r.geo, r.top, r.total, r.wall_ms);
    out << buf;
  }
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir.empty() ? "." : cfg.out_dir);
  const auto entries = load_manifest(cfg.manifest);
  if (entries.empty()) throw DataError("empty manifest: " + cfg.manifest);

  TopGeoModel model(cfg.hyper, cfg.seed);
  AdamState adam;
  Rng aug_rng(cfg.seed ^ 0xA5A5F00DDEADBEEFULL);
  TrainResult result;
  const std::string dir = cfg.out_dir.empty() ? "." : cfg.out_dir;

  int step = 0;
  bool done = false;
  for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    for (size_t base = 0; base < entries.size() && !done; base += cfg.batch_size) {
      const auto t0 = std::chrono::steady_clock::now();
      const size_t end = std::min(entries.size(), base + cfg.batch_size);
      const double inv_bs = 1.0 / static_cast<double>(end - base);

      model.params().zero_grad();
      Tensor geo_sum, top_sum;
      for (size_t s = base; s < end; ++s) {
        PointCloud cloud = realize_entry(entries[s]);
        if (cfg.augment) cloud = augment(cloud, aug_rng);
        const RecoveryResult rec = model.recover(cloud);
        const Tensor gt = cloud_to_tensor(cloud);
        const Tensor geo = geometry_loss(rec.r0, rec.r1, rec.r2, gt);
        const Tensor top = topo_constraint_loss(rec.k0, rec.k1, rec.k2);
        geo_sum = geo_sum.defined() ? add(geo_sum, geo) : geo;
        top_sum = top_sum.defined() ? add(top_sum, top) : top;
      }
      const Tensor geo_mean = scale(geo_sum, inv_bs);
      const Tensor top_mean = scale(top_sum, inv_bs);
      const Tensor total = add(scale(geo_mean, cfg.hyper.lambda), top_mean);

      const double geo_val = geo_mean.item();
      const double top_val = top_mean.item();
      if (!std::isfinite(geo_val))
        throw NumericError("non-finite geometry loss at step " + std::to_string(step));
      if (!std::isfinite(top_val))
        throw NumericError("non-finite topology loss at step " + std::to_string(step));

      backward(total);
      adam_step(model.params(), adam, lr);

      const auto t1 = std::chrono::steady_clock::now();
      TrainLogRow row;
      row.step = step;
      row.epoch = epoch;
      row.lr = lr;
      row.geo = geo_val;
      row.top = top_val;
      row.total = cfg.hyper.lambda * geo_val + top_val;
      row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      result.log.push_back(row);
      ++step;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
    }
    char name[64];
    std::snprintf(name, sizeof(name), "epoch_%03d.tgfc", epoch);
    save_checkpoint(dir + "/" + name, model.params());
  }

  result.final_checkpoint = dir + "/final.tgfc";
  save_checkpoint(result.final_checkpoint, model.params());
  write_train_csv(dir + "/train.csv", result.log);
  return result;
}

EvalResult evaluate(const TopGeoModel& model,
                    const std::vector<std::pair<std::string, PointCloud>>& data) {
  if (data.empty()) throw DataError("evaluate: no clouds given");
  EvalResult res;
  for (const auto& [name, gt] : data) {
    const RecoveryResult rec = model.recover(gt);
    const PointCloud r2 = tensor_to_cloud(rec.r2);
    const PointCloud r0 = tensor_to_cloud(rec.r0);
    EvalRow row;
    row.name = name;
    row.full.cd = chamfer(r2, gt);
    row.full.hd = hausdorff(r2, gt);
    row.full.emd_mode = gt.n() <= 512 ? EmdMode::exact : EmdMode::approximate;
    row.full.emd = emd(r2, gt, row.full.emd_mode);
    row.sample_cd = chamfer(r0, gt);
    res.mean_cd += row.full.cd;
    res.mean_hd += row.full.hd;
    res.mean_emd += row.full.emd;
    res.mean_sample_cd += row.sample_cd;
    res.rows.push_back(std::move(row));
  }
  const double inv = 1.0 / static_cast<double>(res.rows.size());
  res.mean_cd *= inv;
  res.mean_hd *= inv;
  res.mean_emd *= inv;
  res.mean_sample_cd *= inv;
  return res;
}

}  // namespace topgeo
