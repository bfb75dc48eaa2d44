#include "roomsonde/signal.hpp"

#include <algorithm>
#include <cmath>

#include "roomsonde/errors.hpp"
#include "roomsonde/fft.hpp"

namespace roomsonde {

double power_to_db(double p) {
  const double floor_p = std::pow(10.0, kDbFloor / 10.0);
  if (!(p > floor_p)) return kDbFloor;
  return 10.0 * std::log10(p);
}

double db_to_power(double db) { return std::pow(10.0, db / 10.0); }

double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }

double mean_power(const std::vector<double>& x) {
  if (x.empty()) throw Error(Errc::EmptySignal, "mean_power of empty signal");
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / double(x.size());
}

double peak_abs(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::fabs(v));
  return m;
}

bool peak_normalize(std::vector<double>& x) {
  if (x.empty()) throw Error(Errc::EmptySignal, "normalize of empty signal");
  const double m = peak_abs(x);
  if (m == 0.0) return false;
  const double inv = 1.0 / m;
  for (double& v : x) v *= inv;
  return true;
}

std::vector<double> convolve_direct(const std::vector<double>& x, const std::vector<double>& h) {
  if (x.empty() || h.empty()) throw Error(Errc::EmptySignal, "convolution with empty operand");
  std::vector<double> y(x.size() + h.size() - 1, 0.0);
  for (size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (size_t j = 0; j < h.size(); ++j) y[i + j] += xi * h[j];
  }
  return y;
}

std::vector<double> convolve_fft(const std::vector<double>& x, const std::vector<double>& h) {
  if (x.empty() || h.empty()) throw Error(Errc::EmptySignal, "convolution with empty operand");
  const size_t out_len = x.size() + h.size() - 1;
  const size_t n = next_pow2(out_len);
  auto fx = rfft(x, n);
  auto fh = rfft(h, n);
  for (size_t i = 0; i < n; ++i) fx[i] *= fh[i];
  auto y = irfft(fx, out_len);
  return y;
}

std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& h) {
  // Direct wins only when the product of lengths is small.
  if (double(x.size()) * double(h.size()) <= 65536.0) return convolve_direct(x, h);
  return convolve_fft(x, h);
}

Signal convolve(const Signal& x, const Signal& h) {
  if (x.sample_rate != h.sample_rate)
    throw Error(Errc::SampleRateMismatch,
                "convolution operands at " + std::to_string(x.sample_rate) + " and " +
                    std::to_string(h.sample_rate) + " Hz");
  Signal y;
  y.sample_rate = x.sample_rate;
  y.samples = convolve(x.samples, h.samples);
  return y;
}

bool all_finite(const std::vector<double>& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace roomsonde
