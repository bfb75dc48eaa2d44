#include "roomsonde/fft.hpp"

#include <cmath>

#include "roomsonde/errors.hpp"

namespace roomsonde {

namespace {
constexpr double kTau = 6.28318530717958647692;
}

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0) throw Error(Errc::EmptySignal, "fft of empty buffer");
  if (n & (n - 1)) throw Error(Errc::InvalidArgument, "fft size must be a power of two");

  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? kTau : -kTau) / double(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / double(n);
    for (auto& z : a) z *= inv;
  }
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x, size_t n) {
  std::vector<std::complex<double>> a(n, {0.0, 0.0});
  const size_t m = x.size() < n ? x.size() : n;
  for (size_t i = 0; i < m; ++i) a[i] = {x[i], 0.0};
  fft(a, false);
  return a;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spec, size_t n) {
  std::vector<std::complex<double>> a = spec;
  fft(a, true);
  std::vector<double> out(n);
  for (size_t i = 0; i < n && i < a.size(); ++i) out[i] = a[i].real();
  return out;
}

}  // namespace roomsonde
