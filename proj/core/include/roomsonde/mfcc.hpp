#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "roomsonde/fingerprint.hpp"
#include "roomsonde/signal.hpp"

namespace roomsonde {

struct MfccConfig {
  int sample_rate = 16000;
  int frame_length = 400;  // 25 ms
  int hop = 160;           // 10 ms
  int fft_size = 512;
  int mel_bands = 40;
  int num_coeffs = 32;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;

  // Canonical serialization; hashed so features and models never mix across
  // configs.
  std::string canonical() const;
  Fingerprint fingerprint() const;
};

struct FeatureMatrix {
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<float> values;  // row-major
  Fingerprint config_fp{};

  float& at(uint32_t r, uint32_t c) { return values[size_t(r) * cols + c]; }
  float at(uint32_t r, uint32_t c) const { return values[size_t(r) * cols + c]; }
};

struct FeatureStats {
  std::vector<double> mean;  // per coefficient
  std::vector<double> stdev;
};

// Hann window -> zero-pad to fft_size -> power spectrum -> triangular
// area-normalized mel filterbank -> log10 with floor -> orthonormal DCT-II.
// No center padding: frames = 1 + floor((len - frame_length)/hop).
FeatureMatrix compute_mfcc(const Signal& s, const MfccConfig& cfg);

// Per-coefficient z-score with a 1e-6 std floor.
FeatureMatrix standardize(const FeatureMatrix& f, const FeatureStats& stats);

FeatureStats feature_stats(const std::vector<const FeatureMatrix*>& mats);

// RSFT feature tensor file.
void save_features(const std::string& path, const FeatureMatrix& f);
FeatureMatrix load_features(const std::string& path);

}  // namespace roomsonde
