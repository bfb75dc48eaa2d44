#pragma once

#include <array>
#include <string>
#include <vector>

#include "roomsonde/fingerprint.hpp"
#include "roomsonde/nn/network.hpp"

namespace roomsonde::nn {

struct TargetStats {
  std::array<double, kNumTargets> mean{};
  std::array<double, kNumTargets> stdev{};
};

// Serialized model checkpoint (RSWT): weights plus everything needed to
// reproduce the input pipeline and undo target standardization.
struct WeightStore {
  std::string model_name;
  Fingerprint model_fp{};
  int64_t frames = 0;
  int64_t coeffs = 0;
  std::string mfcc_canonical;
  Fingerprint mfcc_fp{};
  TargetStats targets;
  std::vector<double> feat_mean;  // per coefficient, from the train split
  std::vector<double> feat_std;

  struct Entry {
    uint16_t layer_index;
    std::string name;
    Shape dims;
    std::vector<float> data;
  };
  std::vector<Entry> tensors;
};

void save_weights(const std::string& path, const WeightStore& ws);
WeightStore load_weights(const std::string& path);

// copies network parameters (including running stats) into a store
WeightStore snapshot(Network<float>& net, const std::string& mfcc_canonical,
                     const Fingerprint& mfcc_fp, const TargetStats& targets,
                     const std::vector<double>& feat_mean, const std::vector<double>& feat_std);

// loads parameters back; throws FingerprintMismatch if the store was written
// for a different architecture, ShapeMismatch on any tensor size conflict
void restore(Network<float>& net, const WeightStore& ws);

}  // namespace roomsonde::nn
