#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "roomsonde/fingerprint.hpp"
#include "roomsonde/nn/tensor.hpp"

namespace roomsonde::nn {

enum class LayerKind { Conv2D, BatchNorm, Activation, MaxPool, Dropout, Gru, Dense, TimeFlatten, GlobalFlatten };

enum class Act { Relu, Elu };

struct LayerSpec {
  LayerKind kind;
  int kernel = 0;    // Conv2D
  int filters = 0;   // Conv2D
  Act act = Act::Relu;
  double p = 0.0;    // Dropout
  int units = 0;     // Gru / Dense
};

// Six regression targets, fixed order shared by labels, training, and report.
constexpr int kNumTargets = 6;
extern const char* const kTargetNames[kNumTargets];  // rt60, drr, c50, c80, sti, snr

struct ModelSpec {
  std::string name;
  std::vector<LayerSpec> layers;

  std::string canonical() const;
  Fingerprint fingerprint() const;
};

// Built-in architectures. "baseline_cnn" uses ReLU, "crnn" ELU; every conv is
// followed by BatchNorm -> activation -> MaxPool(2x2) -> Dropout(0.2); the
// 6-unit head is linear.
ModelSpec build_model(const std::string& name);

// Chain-checks shapes for one example of (frames, coeffs, 1) input; throws
// ShapeMismatch with the offending layer on failure. Returns the output shape.
Shape validate_shapes(const ModelSpec& spec, int64_t frames, int64_t coeffs);

// Trainable parameter count, computed analytically from the layer list.
int64_t param_count(const ModelSpec& spec, int64_t frames, int64_t coeffs);

}  // namespace roomsonde::nn
