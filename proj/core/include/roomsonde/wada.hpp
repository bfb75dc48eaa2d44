#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace roomsonde {

// Waveform amplitude distribution analysis. The blind SNR estimate inverts a
// precomputed map from SNR to the log-amplitude gap statistic
// G = ln(mean|z|) - mean(ln|z|), built by Monte Carlo over gamma-distributed
// speech amplitudes (shape 0.4) mixed with Gaussian noise.

// analytic anchors for the two pure distributions
inline constexpr double kGGauss = 0.4093890;   // 0.5*(euler_gamma + ln 2)
inline constexpr double kGGamma = 1.6450959;   // ln(0.4) - digamma(0.4)
inline constexpr double kWadaShape = 0.4;

struct WadaTable {
  std::vector<double> snr_db;  // ascending, -20..100 step 0.5
  std::vector<double> g;       // strictly increasing
};

double g_statistic(const std::vector<double>& x);

// samples_per_point below 1e6 is rejected; one seeded stream per table point
WadaTable build_wada_table(uint64_t seed, int64_t samples_per_point = 1000000);

double wada_snr(const std::vector<double>& x, const WadaTable& table);

void save_wada_table(const std::string& path, const WadaTable& table);
WadaTable load_wada_table(const std::string& path);

}  // namespace roomsonde
