#pragma once

#include <string>

#include "roomsonde/signal.hpp"

namespace roomsonde {

enum class WavFormat { Pcm16, Float32 };

// Reads 16/24/32-bit PCM or 32-bit float RIFF/WAVE (plain or extensible);
// multichannel input is downmixed to mono by averaging channels. Anything
// else is rejected.
Signal load_wav(const std::string& path);

void save_wav(const std::string& path, const Signal& s, WavFormat format = WavFormat::Float32);

}  // namespace roomsonde
