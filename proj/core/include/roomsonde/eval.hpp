#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace roomsonde {

// target order everywhere: rt60, drr, c50, c80, sti, snr
inline constexpr std::array<double, 7> kSnrBinEdges = {-6, -1, 4, 9, 14, 19, 24};

double mae(const std::vector<double>& pred, const std::vector<double>& truth);

struct MaeBin {
  double lo, hi;  // right-closed (lo, hi]
  int64_t n;
  double mae;  // NaN when the bin is empty
};

// absolute errors binned by the true SNR; values outside the edges are dropped
std::vector<MaeBin> binned_mae(const std::vector<double>& abs_err,
                               const std::vector<double>& true_snr);

struct EvalExample {
  std::string id;
  std::array<double, 6> pred{};
  std::array<double, 6> truth{};
  uint32_t flags = 0;
};

// excludes an example from a target's metrics when its label for that target
// is capped, invalid, or the chunk was silent
bool target_valid(uint32_t flags, int target);

struct TargetEval {
  double mae_filtered = 0.0;  // over valid labels only
  int64_t n_filtered = 0;
  double mae_all = 0.0;  // every example, caps included
  std::vector<MaeBin> snr_bins;  // filtered errors binned by true SNR
};

struct EvalReport {
  int64_t n = 0;
  std::array<TargetEval, 6> targets;
  bool any_empty_bin = false;
};

EvalReport evaluate(const std::vector<EvalExample>& examples);

// JSON report: metrics plus per-example pred/truth pairs and caller metadata
void save_report(const std::string& path, const EvalReport& r,
                 const std::vector<EvalExample>& examples,
                 const std::map<std::string, std::string>& meta);

// CSV `param,bin_lo,bin_hi,n,mean_pred,std_pred`, 20 equal-width bins over
// each target's true range
void export_calibration(const std::string& path, const std::vector<EvalExample>& examples);

}  // namespace roomsonde
