#include "roomsonde/fingerprint.hpp"

namespace roomsonde {

Fingerprint fnv1a_128(const std::string& bytes) {
  // offset basis 0x6c62272e07bb014262b821756295c58d, prime 2^88 + 2^8 + 0x3b
  unsigned __int128 hash = ((unsigned __int128)0x6c62272e07bb0142ull << 64) | 0x62b821756295c58dull;
  const unsigned __int128 prime = ((unsigned __int128)1 << 88) | 0x13b;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= prime;
  }
  Fingerprint fp;
  for (int i = 15; i >= 0; --i) {
    fp[size_t(i)] = uint8_t(hash & 0xff);
    hash >>= 8;
  }
  return fp;
}

std::string fingerprint_hex(const Fingerprint& fp) {
  static const char* hex = "0123456789abcdef";
  std::string s(32, '0');
  for (size_t i = 0; i < 16; ++i) {
    s[2 * i] = hex[fp[i] >> 4];
    s[2 * i + 1] = hex[fp[i] & 0xf];
  }
  return s;
}

}  // namespace roomsonde
