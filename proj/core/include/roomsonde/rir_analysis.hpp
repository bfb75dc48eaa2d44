#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "roomsonde/signal.hpp"

namespace roomsonde {

// Label caps and analysis constants shared with dataset building.
constexpr double kRatioCapDb = 60.0;
constexpr double kCleanSnrDb = 30.0;
constexpr double kOnsetThreshold = 0.05;
constexpr double kStiMinSeconds = 1.6;

enum LabelFlag : uint32_t {
  kFlagRt60Invalid = 1u << 0,
  kFlagDrrCapped = 1u << 1,
  kFlagC50Capped = 1u << 2,
  kFlagC80Capped = 1u << 3,
  kFlagStiBandSilent = 1u << 4,
  kFlagSnrClean = 1u << 5,
  kFlagSilentChunk = 1u << 6,
};

std::vector<std::string> flag_names(uint32_t flags);
uint32_t flags_from_names(const std::vector<std::string>& names);

struct AcousticLabel {
  double rt60 = 0.0;   // seconds
  double drr = 0.0;    // dB
  double c50 = 0.0;    // dB
  double c80 = 0.0;    // dB
  double sti = 0.0;    // [0,1]
  std::optional<double> snr;  // dB, attached at mixing time
  uint32_t flags = 0;
};

struct DecayCurve {
  std::vector<double> times;   // seconds, from 0
  std::vector<double> levels;  // dB, 0 at t=0, non-increasing
};

// Strips leading samples below 5% of the global absolute peak.
Signal align_onset(const Signal& h);

DecayCurve schroeder_decay(const Signal& h);

// RT30 line fit over [-35, -5] dB, doubled. Throws InsufficientDecayRange if
// the curve never reaches -35 dB, DegenerateFit on a window of < 10 points or
// a non-negative slope.
double estimate_rt60(const DecayCurve& d);

// 10*log10(early/late) with the boundary sample in the late window.
// Throws ZeroLateEnergy when late < 1e-12 of the total; caller decides capping.
double energy_ratio(const Signal& h, double split_ms);

struct StiResult {
  double sti = 0.0;
  uint32_t silent_band_mask = 0;  // bands whose MTI was forced to 0
};

// Indirect STI via the modulation transfer function of the squared RIR in 7
// octave bands. The response of the band filters themselves is divided out so
// that a perfect channel scores exactly 1.
StiResult compute_sti(const Signal& h);

// Onset-aligns once, then fills all five RIR-derived parameters. Failed
// sub-analyses set flags instead of aborting.
AcousticLabel analyze_rir(const Signal& h);

extern const char* const kAnalyzerVersion;

// Second-order sections for a 4th-order Butterworth band-pass, exposed for
// spectral tests.
struct Biquad {
  double b0, b1, b2, a1, a2;
};
std::vector<Biquad> butter_bandpass(double lo_hz, double hi_hz, double fs);
std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x);

}  // namespace roomsonde
