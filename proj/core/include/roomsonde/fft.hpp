#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace roomsonde {

// In-place iterative radix-2 FFT. n must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse);

size_t next_pow2(size_t n);

// Real FFT convenience wrappers on top of the complex transform.
std::vector<std::complex<double>> rfft(const std::vector<double>& x, size_t n);
std::vector<double> irfft(const std::vector<std::complex<double>>& spec, size_t n);

}  // namespace roomsonde
