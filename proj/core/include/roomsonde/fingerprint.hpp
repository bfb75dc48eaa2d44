#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace roomsonde {

using Fingerprint = std::array<uint8_t, 16>;

// FNV-1a over the bytes, 128-bit variant.
Fingerprint fnv1a_128(const std::string& bytes);

std::string fingerprint_hex(const Fingerprint& fp);

}  // namespace roomsonde
