#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace roomsonde {

// Levels below this are treated as silence in dB conversions.
constexpr double kDbFloor = -120.0;

struct Signal {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? double(samples.size()) / double(sample_rate) : 0.0;
  }
};

// 10*log10 with the floor applied to the power ratio argument.
double power_to_db(double p);
double db_to_power(double db);
double db_to_amplitude(double db);

// Mean of squared samples; throws on empty input.
double mean_power(const std::vector<double>& x);

double peak_abs(const std::vector<double>& x);

// In-place S / max|S|. All-zero input is left unchanged; the return value is
// false for that silent case so callers can flag it (a silent chunk must not
// abort a batch).
bool peak_normalize(std::vector<double>& x);

// Full linear convolution, output length |x| + |h| - 1.
std::vector<double> convolve_direct(const std::vector<double>& x, const std::vector<double>& h);
std::vector<double> convolve_fft(const std::vector<double>& x, const std::vector<double>& h);
// Picks the direct path for tiny inputs, FFT otherwise.
std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& h);
Signal convolve(const Signal& x, const Signal& h);

bool all_finite(const std::vector<double>& x);

}  // namespace roomsonde
