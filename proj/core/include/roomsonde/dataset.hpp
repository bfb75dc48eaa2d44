#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "roomsonde/noise.hpp"
#include "roomsonde/rir_analysis.hpp"

namespace roomsonde {

struct ExampleRecipe {
  std::string id;
  std::string split;        // "train" or "test"
  std::string speech_path;
  std::string rir_path;     // empty = reverb-free (unit impulse)
  NoiseSpec noise;          // kind None = noise-free
  double snr_db = 0.0;      // mixing target; unused when noise-free
  int chunk_index = 0;      // which chunk of the reverberant speech
  uint64_t seed = 0;
};

struct DatasetManifest {
  int version = 1;
  uint64_t seed = 0;
  int sample_rate = 16000;
  double chunk_seconds = 8.0;
  std::vector<ExampleRecipe> examples;

  bool has_stats = false;  // filled by build_dataset from the train split
  std::array<double, 6> label_mean{};
  std::array<double, 6> label_std{};

  int64_t chunk_samples() const;
};

void save_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path);

// seeded partition of n source files; train size is clamped to [1, n-1]
std::pair<std::vector<int>, std::vector<int>> make_splits(int n, double train_fraction,
                                                          uint64_t seed);

// non-overlapping chunks; throws ChunkTooShort when none fit
std::vector<Signal> chunk_speech(const Signal& x, double chunk_seconds);

struct GenOptions {
  int count = 1000;
  uint64_t seed = 0;
  int sample_rate = 16000;
  double chunk_seconds = 8.0;
  double train_fraction = 0.8;       // per example
  double rir_train_fraction = 306.0 / 406.0;   // source-level partitions
  double speech_train_fraction = 0.8;
  double reverb_free_fraction = 0.10;
  double noise_free_fraction = 0.10;
  int snr_lo = -5;  // inclusive, integer dB grid
  int snr_hi = 24;
};

// Draws example recipes over pre-partitioned source pools. RIRs and speech
// files never cross the train/test boundary.
DatasetManifest gen_manifest(const std::vector<std::string>& rir_paths,
                             const std::vector<std::string>& speech_paths,
                             const std::vector<std::string>& noise_paths, const GenOptions& opt);

struct SynthResult {
  Signal mix;            // peak-normalized chunk at manifest rate
  AcousticLabel label;
};

// resample -> convolve -> chunk -> scale noise against the reverberant chunk
// -> mix -> peak-normalize; the label comes from the RIR plus the SNR target
SynthResult synthesize_example(const ExampleRecipe& r, const DatasetManifest& m);

struct BuildStats {
  int64_t built = 0;
  int64_t skipped = 0;
};

// writes wav/<id>.wav and labels.csv under out_dir, fills train label stats
// into the manifest copy saved as out_dir/manifest.json; failures are logged
// and skipped
BuildStats build_dataset(const DatasetManifest& m, const std::string& out_dir);

std::string label_csv_header();
std::string label_csv_row(const std::string& id, const std::string& split,
                          const AcousticLabel& label);

struct LabelRow {
  std::string id;
  std::string split;
  AcousticLabel label;  // snr always present in the file
};

std::vector<LabelRow> load_labels_csv(const std::string& path);

}  // namespace roomsonde
