#include "roomsonde/mfcc.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>

#include "roomsonde/errors.hpp"
#include "roomsonde/fft.hpp"

namespace roomsonde {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct MfccPlan {
  std::vector<double> window;              // periodic Hann, frame_length
  std::vector<std::vector<double>> mel;    // mel_bands x (fft/2+1), dense rows
  std::vector<double> dct;                 // num_coeffs x mel_bands, row-major
  int n_bins = 0;

  explicit MfccPlan(const MfccConfig& c) {
    window.resize(size_t(c.frame_length));
    for (int i = 0; i < c.frame_length; ++i)
      window[size_t(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * double(i) / double(c.frame_length));

    n_bins = c.fft_size / 2 + 1;
    const double mel_lo = hz_to_mel(c.fmin);
    const double mel_hi = hz_to_mel(c.fmax);
    std::vector<double> edges(size_t(c.mel_bands) + 2);
    for (int m = 0; m < c.mel_bands + 2; ++m)
      edges[size_t(m)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(m) / double(c.mel_bands + 1));

    mel.assign(size_t(c.mel_bands), std::vector<double>(size_t(n_bins), 0.0));
    for (int m = 0; m < c.mel_bands; ++m) {
      const double lo = edges[size_t(m)], mid = edges[size_t(m) + 1], hi = edges[size_t(m) + 2];
      const double area = 2.0 / (hi - lo);  // unit-area triangles
      for (int k = 0; k < n_bins; ++k) {
        const double f = double(k) * double(c.sample_rate) / double(c.fft_size);
        double w = 0.0;
        if (f > lo && f < mid)
          w = (f - lo) / (mid - lo);
        else if (f >= mid && f < hi)
          w = (hi - f) / (hi - mid);
        mel[size_t(m)][size_t(k)] = w * area;
      }
    }

    dct.resize(size_t(c.num_coeffs) * size_t(c.mel_bands));
    const double s0 = std::sqrt(1.0 / double(c.mel_bands));
    const double sj = std::sqrt(2.0 / double(c.mel_bands));
    for (int j = 0; j < c.num_coeffs; ++j)
      for (int m = 0; m < c.mel_bands; ++m)
        dct[size_t(j) * size_t(c.mel_bands) + size_t(m)] =
            (j == 0 ? s0 : sj) * std::cos(kPi * double(j) * (double(m) + 0.5) / double(c.mel_bands));
  }
};

const MfccPlan& plan_for(const MfccConfig& c) {
  static std::map<std::string, MfccPlan> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const std::string key = c.canonical();
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, MfccPlan(c)).first;
  return it->second;
}

}  // namespace

std::string MfccConfig::canonical() const {
  std::string s = "mfcc:v1";
  s += ";sample_rate=" + std::to_string(sample_rate);
  s += ";frame_length=" + std::to_string(frame_length);
  s += ";hop=" + std::to_string(hop);
  s += ";fft_size=" + std::to_string(fft_size);
  s += ";mel_bands=" + std::to_string(mel_bands);
  s += ";num_coeffs=" + std::to_string(num_coeffs);
  s += ";fmin=" + fmt_num(fmin);
  s += ";fmax=" + fmt_num(fmax);
  s += ";log_floor=" + fmt_num(log_floor);
  return s;
}

Fingerprint MfccConfig::fingerprint() const { return fnv1a_128(canonical()); }

FeatureMatrix compute_mfcc(const Signal& s, const MfccConfig& cfg) {
  if (s.sample_rate != cfg.sample_rate)
    throw Error(Errc::SampleRateMismatch,
                "signal at " + std::to_string(s.sample_rate) + " Hz, config expects " +
                    std::to_string(cfg.sample_rate));
  const size_t n = s.samples.size();
  if (n < size_t(cfg.frame_length))
    throw Error(Errc::SignalTooShort, "need at least one full frame");

  const MfccPlan& plan = plan_for(cfg);
  const uint32_t frames = uint32_t(1 + (n - size_t(cfg.frame_length)) / size_t(cfg.hop));

  FeatureMatrix out;
  out.rows = frames;
  out.cols = uint32_t(cfg.num_coeffs);
  out.values.resize(size_t(frames) * size_t(cfg.num_coeffs));
  out.config_fp = cfg.fingerprint();

  std::vector<std::complex<double>> spec(size_t(cfg.fft_size));
  std::vector<double> power(size_t(plan.n_bins));
  std::vector<double> logmel(size_t(cfg.mel_bands));

  for (uint32_t fr = 0; fr < frames; ++fr) {
    const size_t start = size_t(fr) * size_t(cfg.hop);
    for (int i = 0; i < cfg.fft_size; ++i) {
      const double v =
          i < cfg.frame_length ? s.samples[start + size_t(i)] * plan.window[size_t(i)] : 0.0;
      spec[size_t(i)] = {v, 0.0};
    }
    fft(spec, false);
    for (int k = 0; k < plan.n_bins; ++k) power[size_t(k)] = std::norm(spec[size_t(k)]);

    for (int m = 0; m < cfg.mel_bands; ++m) {
      double acc = 0.0;
      const auto& row = plan.mel[size_t(m)];
      for (int k = 0; k < plan.n_bins; ++k) acc += row[size_t(k)] * power[size_t(k)];
      logmel[size_t(m)] = std::log10(std::max(acc, cfg.log_floor));
    }

    for (int j = 0; j < cfg.num_coeffs; ++j) {
      double acc = 0.0;
      const double* drow = &plan.dct[size_t(j) * size_t(cfg.mel_bands)];
      for (int m = 0; m < cfg.mel_bands; ++m) acc += drow[m] * logmel[size_t(m)];
      out.at(fr, uint32_t(j)) = float(acc);
    }
  }
  return out;
}

FeatureMatrix standardize(const FeatureMatrix& f, const FeatureStats& stats) {
  if (stats.mean.size() != f.cols || stats.stdev.size() != f.cols)
    throw Error(Errc::ShapeMismatch, "stats dimensionality does not match feature columns");
  FeatureMatrix out = f;
  for (uint32_t c = 0; c < f.cols; ++c) {
    const double mu = stats.mean[c];
    const double sd = std::max(stats.stdev[c], 1e-6);
    for (uint32_t r = 0; r < f.rows; ++r)
      out.at(r, c) = float((double(f.at(r, c)) - mu) / sd);
  }
  return out;
}

FeatureStats feature_stats(const std::vector<const FeatureMatrix*>& mats) {
  if (mats.empty()) throw Error(Errc::EmptySourceList, "no feature matrices");
  const uint32_t cols = mats[0]->cols;
  FeatureStats st;
  st.mean.assign(cols, 0.0);
  st.stdev.assign(cols, 0.0);
  double count = 0.0;
  for (const auto* m : mats) {
    if (m->cols != cols) throw Error(Errc::ShapeMismatch, "mixed feature widths");
    for (uint32_t r = 0; r < m->rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) st.mean[c] += double(m->at(r, c));
    count += double(m->rows);
  }
  for (uint32_t c = 0; c < cols; ++c) st.mean[c] /= count;
  for (const auto* m : mats)
    for (uint32_t r = 0; r < m->rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) {
        const double d = double(m->at(r, c)) - st.mean[c];
        st.stdev[c] += d * d;
      }
  for (uint32_t c = 0; c < cols; ++c) st.stdev[c] = std::sqrt(st.stdev[c] / count);
  return st;
}

}  // namespace roomsonde
