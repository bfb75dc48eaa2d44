#pragma once

#include <vector>

#include "roomsonde/signal.hpp"

namespace roomsonde {

// Polyphase windowed-sinc rate conversion (Kaiser beta = 10, 24 zero
// crossings per side, cutoff at 95% of the lower Nyquist). Output length is
// llround(n * dst / src); equal rates return the input unchanged.
std::vector<double> resample(const std::vector<double>& x, int src_rate, int dst_rate);

Signal resample(const Signal& s, int dst_rate);

}  // namespace roomsonde
