#include "roomsonde/resample.hpp"

#include <cmath>
#include <numeric>

#include "roomsonde/errors.hpp"

namespace roomsonde {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kKaiserBeta = 10.0;
constexpr int kZeroCrossings = 24;

double bessel_i0(double x) {
  double term = 1.0, sum = 1.0;
  const double q = 0.25 * x * x;
  for (int m = 1; m < 64; ++m) {
    term *= q / double(m * m);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

double sinc(double t) {
  if (std::fabs(t) < 1e-12) return 1.0;
  const double p = kPi * t;
  return std::sin(p) / p;
}

}  // namespace

std::vector<double> resample(const std::vector<double>& x, int src_rate, int dst_rate) {
  if (src_rate <= 0 || dst_rate <= 0)
    throw Error(Errc::InvalidArgument, "sample rates must be positive");
  if (src_rate == dst_rate) return x;
  if (x.empty()) return {};

  const long long g = std::gcd((long long)src_rate, (long long)dst_rate);
  const long long L = dst_rate / g;  // upsample factor
  const long long M = src_rate / g;  // decimate factor
  const double R = double(src_rate) * double(L);  // upsampled grid rate
  const double fc = 0.475 * double(std::min(src_rate, dst_rate));

  const long long half = (long long)std::ceil(double(kZeroCrossings) * R / (2.0 * fc));
  std::vector<double> kernel(size_t(half) + 1);
  const double i0b = bessel_i0(kKaiserBeta);
  const double scale = double(L) * 2.0 * fc / R;
  for (long long k = 0; k <= half; ++k) {
    const double t = double(k) / double(half);
    const double w = bessel_i0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - t * t))) / i0b;
    kernel[size_t(k)] = scale * sinc(2.0 * fc * double(k) / R) * w;
  }

  const long long n_in = (long long)x.size();
  const long long n_out = llround(double(n_in) * double(dst_rate) / double(src_rate));
  std::vector<double> y(size_t(n_out), 0.0);

  for (long long j = 0; j < n_out; ++j) {
    const long long center = j * M;  // position on the upsampled grid
    long long n_lo = (center - half + L - 1) / L;
    long long n_hi = (center + half) / L;
    if (n_lo < 0) n_lo = 0;
    if (n_hi >= n_in) n_hi = n_in - 1;
    double acc = 0.0;
    for (long long n = n_lo; n <= n_hi; ++n) {
      const long long k = center - n * L;
      acc += x[size_t(n)] * kernel[size_t(k < 0 ? -k : k)];
    }
    y[size_t(j)] = acc;
  }
  return y;
}

Signal resample(const Signal& s, int dst_rate) {
  Signal out;
  out.sample_rate = dst_rate;
  out.samples = resample(s.samples, s.sample_rate, dst_rate);
  return out;
}

}  // namespace roomsonde
