#pragma once

#include <map>
#include <string>
#include <vector>

#include "topgeo/metrics.hpp"
#include "topgeo/model.hpp"
#include "topgeo/synth.hpp"

namespace topgeo {

struct TrainConfig {
  Hyper hyper;                // n_points lives in hyper.n
  double lr0 = 0.005;
  double decay_factor = 0.5;
  int decay_every_epochs = 30;
  int epochs = 20;            // desk default; paper setting is 120
  int batch_size = 8;         // desk default; paper setting is 32
  int max_steps = 0;          // 0 = no cap
  std::string manifest;
  std::string out_dir;
  uint64_t seed = 0;
  bool augment = true;        // random mirror/scale/yaw per training sample

  void validate() const;
  // flat key=value text; unknown keys are hard errors
  static TrainConfig from_file(const std::string& path);
};

struct TrainLogRow {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  double geo = 0.0;
  double top = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;
};

// First/second-moment buffers per parameter, keyed like the store.
struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  int64_t t = 0;
};

double lr_schedule(int epoch, const TrainConfig& cfg);

// Standard bias-corrected Adam, applied in place from the accumulated grads.
void adam_step(ParamStore& params, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::string final_checkpoint;
};

// Full loop: per step realize a batch (optionally augmented), recover, assemble
// the combined loss, backward, Adam. Writes per-epoch checkpoints plus
// train.csv into cfg.out_dir. Deterministic given cfg.seed.
TrainResult train(const TrainConfig& cfg);

void write_train_csv(const std::string& path, const std::vector<TrainLogRow>& rows);

struct EvalRow {
  std::string name;
  MetricReport full;      // r2 against ground truth
  double sample_cd = 0.0; // r0 against ground truth
};

struct EvalResult {
  std::vector<EvalRow> rows;
  double mean_cd = 0.0, mean_hd = 0.0, mean_emd = 0.0, mean_sample_cd = 0.0;
};

// Per-cloud CD/HD/EMD of the restored cloud plus the sampled-cloud CD.
// EMD is exact for n <= 512, auction-approximate above.
EvalResult evaluate(const TopGeoModel& model,
                    const std::vector<std::pair<std::string, PointCloud>>& data);

}  // namespace topgeo
