#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "roomsonde/fft.hpp"
#include "roomsonde/signal.hpp"

namespace testutil {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           (tag + "-" + std::to_string(uint64_t(::getpid())) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

// Welch periodogram, Hann window, 50% overlap. Returns one-sided PSD and bin width.
inline std::vector<double> welch_psd(const std::vector<double>& x, size_t nfft) {
  std::vector<double> win(nfft);
  for (size_t i = 0; i < nfft; ++i)
    win[i] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * double(i) / double(nfft));
  std::vector<double> psd(nfft / 2 + 1, 0.0);
  size_t segs = 0;
  for (size_t start = 0; start + nfft <= x.size(); start += nfft / 2) {
    std::vector<double> seg(nfft);
    for (size_t i = 0; i < nfft; ++i) seg[i] = x[start + i] * win[i];
    const auto spec = roomsonde::rfft(seg, nfft);
    for (size_t k = 0; k < psd.size(); ++k) psd[k] += std::norm(spec[k]);
    ++segs;
  }
  for (auto& v : psd) v /= double(segs ? segs : 1);
  return psd;
}

// Mean PSD level (dB) per octave band around the given centers, then the
// least-squares slope in dB per octave.
inline double octave_slope_db(const std::vector<double>& x, int rate,
                              const std::vector<double>& centers) {
  const size_t nfft = 8192;
  const auto psd = welch_psd(x, nfft);
  std::vector<double> oct, level;
  for (double fc : centers) {
    const double lo = fc / std::sqrt(2.0), hi = fc * std::sqrt(2.0);
    const size_t klo = size_t(std::ceil(lo * double(nfft) / rate));
    const size_t khi = std::min(psd.size() - 1, size_t(std::floor(hi * double(nfft) / rate)));
    double acc = 0.0;
    size_t n = 0;
    for (size_t k = klo; k <= khi; ++k, ++n) acc += psd[k];
    oct.push_back(std::log2(fc));
    level.push_back(10.0 * std::log10(acc / double(n)));
  }
  const size_t n = oct.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += oct[i];
    sy += level[i];
    sxx += oct[i] * oct[i];
    sxy += oct[i] * level[i];
  }
  return (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx);
}

}  // namespace testutil
