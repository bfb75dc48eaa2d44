#pragma once

#include <cstdint>

#include "roomsonde/signal.hpp"

namespace roomsonde {

// Deterministic h(t) = exp(-3 ln10 * t / T): Schroeder curve is an exact
// -60/T dB/s line.
Signal make_exp_rir(int fs, double t60, double dur_s);

// Gaussian-modulated exponential tail behind a direct-path spike whose level
// is direct_db above the tail start.
Signal make_noisy_exp_rir(int fs, double t60, double dur_s, uint64_t seed, double direct_db);

// Two decay rates with the knee at knee_s.
Signal make_two_slope_rir(int fs, double t60_early, double t60_late, double knee_s, double dur_s,
                          uint64_t seed, double direct_db);

// Voiced/unvoiced excitation through drifting resonators with syllabic
// amplitude modulation and pauses; a stand-in for speech recordings.
Signal make_speechlike(int fs, double dur_s, uint64_t seed);

// Gamma(shape)-amplitude, random-sign samples at unit mean power; the
// amplitude model behind the blind SNR baseline.
Signal make_gamma_signal(size_t n, uint64_t seed, double shape, int rate);

}  // namespace roomsonde
