#pragma once

#include <cstdint>
#include <string>

#include "roomsonde/signal.hpp"

namespace roomsonde {

enum class NoiseKind { White, Pink, Real, None };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  std::string source;  // real only
  uint64_t seed = 0;   // generated kinds; for real, picks the tiling offset
};

const char* noise_kind_name(NoiseKind k);
NoiseKind noise_kind_from_name(const std::string& name);

// i.i.d. standard Gaussian samples; mean power ~= 1 by construction.
Signal gen_white(size_t n, uint64_t seed, int rate);

// 1/f-shaped noise via a cascade of staggered first-order shelves, block
// normalized to unit mean power.
Signal gen_pink(size_t n, uint64_t seed, int rate);

// Realizes a NoiseSpec at a given length/rate. Real noise is resampled,
// tiled when shorter than n, and started at a seeded offset.
Signal realize_noise(const NoiseSpec& spec, size_t n, int rate);

// Returns noise truncated to len(speech) and scaled so that
// 10*log10(P_speech / P_noise) equals target_db exactly.
Signal scale_to_snr(const Signal& speech, const Signal& noise, double target_db);

}  // namespace roomsonde
