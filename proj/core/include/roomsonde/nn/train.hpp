#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "roomsonde/nn/weight_store.hpp"

namespace roomsonde::nn {

struct TrainConfig {
  std::string model = "baseline_cnn";
  int64_t frames = 798;
  int64_t coeffs = 32;
  int batch_size = 64;
  int max_epochs = 200;
  int patience = 15;       // epochs without val improvement before stopping
  double lr = 1e-3;
  double val_fraction = 0.10;  // carved from a seeded shuffle; 0 disables validation
  int64_t max_updates = 0;     // optimizer-step cap, 0 = none
  double target_train_loss = 0.0;  // stop once epoch train loss is below; 0 = off
  uint64_t seed = 0;
  bool progress = false;  // per-epoch line on stderr
};

// raw (unstandardized) features and physical-unit targets
struct TrainSet {
  int64_t n = 0;
  int64_t frames = 0;
  int64_t coeffs = 0;
  std::vector<float> features;  // n * frames * coeffs
  std::vector<float> targets;   // n * kNumTargets
  std::string mfcc_canonical;
  Fingerprint mfcc_fp{};
};

struct EpochStat {
  int epoch;
  double train_loss;
  double val_loss;  // NaN when no validation split
};

struct TrainResult {
  WeightStore weights;  // best-val snapshot (last-epoch weights when no validation)
  std::vector<EpochStat> history;
  int best_epoch = -1;
  double best_val = 0.0;
  int64_t updates = 0;
};

TrainResult train_model(const TrainConfig& cfg, const TrainSet& data);

// Holds a restored network for repeated inference. Outputs are de-standardized
// to physical units with sti clamped to [0,1] and rt60 clamped non-negative.
class Predictor {
public:
  explicit Predictor(const WeightStore& ws);
  std::vector<float> run(const float* features, int64_t n, const Fingerprint& mfcc_fp);
  const WeightStore& store() const { return ws_; }

private:
  WeightStore ws_;
  Network<float> net_;
};

}  // namespace roomsonde::nn
