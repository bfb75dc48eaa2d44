#include "roomsonde/synth.hpp"

#include <cmath>

#include "roomsonde/errors.hpp"
#include "roomsonde/rng.hpp"

namespace roomsonde {

namespace {

constexpr double kPi = 3.14159265358979323846;

double decay_coeff(double t60) { return -3.0 * std::log(10.0) / t60; }

}  // namespace

Signal make_exp_rir(int fs, double t60, double dur_s) {
  if (t60 <= 0.0 || dur_s <= 0.0)
    throw Error(Errc::InvalidArgument, "t60 and duration must be positive");
  Signal h;
  h.sample_rate = fs;
  const size_t n = size_t(std::llround(dur_s * fs));
  h.samples.resize(n);
  const double a = decay_coeff(t60);
  for (size_t i = 0; i < n; ++i) h.samples[i] = std::exp(a * double(i) / fs);
  return h;
}

Signal make_noisy_exp_rir(int fs, double t60, double dur_s, uint64_t seed, double direct_db) {
  Signal h;
  h.sample_rate = fs;
  const size_t n = size_t(std::llround(dur_s * fs));
  h.samples.resize(n);
  Rng rng(seed);
  const double a = decay_coeff(t60);
  for (size_t i = 0; i < n; ++i) h.samples[i] = rng.gaussian() * std::exp(a * double(i) / fs);
  // direct path: a clean spike direct_db above the tail's starting level
  h.samples[0] = std::pow(10.0, direct_db / 20.0);
  return h;
}

Signal make_two_slope_rir(int fs, double t60_early, double t60_late, double knee_s, double dur_s,
                          uint64_t seed, double direct_db) {
  Signal h;
  h.sample_rate = fs;
  const size_t n = size_t(std::llround(dur_s * fs));
  h.samples.resize(n);
  Rng rng(seed);
  const double a1 = decay_coeff(t60_early);
  const double a2 = decay_coeff(t60_late);
  const double knee_level = a1 * knee_s;  // log-amplitude where the slopes meet
  for (size_t i = 0; i < n; ++i) {
    const double t = double(i) / fs;
    const double loga = t < knee_s ? a1 * t : knee_level + a2 * (t - knee_s);
    h.samples[i] = rng.gaussian() * std::exp(loga);
  }
  h.samples[0] = std::pow(10.0, direct_db / 20.0);
  return h;
}

namespace {

struct Resonator {
  double a1 = 0.0, a2 = 0.0, g = 1.0;
  double y1 = 0.0, y2 = 0.0;

  void tune(double freq, double radius, double fs) {
    a1 = -2.0 * radius * std::cos(2.0 * kPi * freq / fs);
    a2 = radius * radius;
    g = 1.0 - radius;
  }
  double step(double x) {
    const double y = g * x - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

Signal make_speechlike(int fs, double dur_s, uint64_t seed) {
  Rng rng(seed);
  const size_t n = size_t(std::llround(dur_s * fs));
  Signal s;
  s.sample_rate = fs;
  s.samples.assign(n, 0.0);

  Resonator f1, f2, f3, fric;
  const double p1 = rng.uniform(0.0, 2.0 * kPi), p2 = rng.uniform(0.0, 2.0 * kPi);
  const double p3 = rng.uniform(0.0, 2.0 * kPi), p4 = rng.uniform(0.0, 2.0 * kPi);
  const double f0_base = rng.uniform(95.0, 210.0);
  const double syl_rate = rng.uniform(2.5, 6.5);

  double phase = 0.0;
  bool voiced = true;
  size_t seg_left = size_t(rng.uniform(0.08, 0.3) * fs);
  size_t pause_left = 0;
  size_t until_pause = size_t(rng.uniform(1.5, 4.0) * fs);

  for (size_t i = 0; i < n; ++i) {
    const double t = double(i) / fs;

    if (i % 160 == 0) {  // drift the vocal tract every 10 ms
      f1.tune(600.0 + 280.0 * std::sin(2.0 * kPi * 0.23 * t + p1), 0.975, fs);
      f2.tune(1700.0 + 700.0 * std::sin(2.0 * kPi * 0.17 * t + p2), 0.97, fs);
      f3.tune(2900.0 + 450.0 * std::sin(2.0 * kPi * 0.11 * t + p3), 0.96, fs);
      fric.tune(4500.0, 0.9, fs);
    }

    if (seg_left == 0) {  // alternate voiced and unvoiced stretches
      voiced = rng.uniform() < 0.72;
      seg_left = size_t(rng.uniform(0.08, 0.3) * fs);
    }
    --seg_left;

    if (pause_left > 0) {
      --pause_left;
    } else if (until_pause == 0) {
      pause_left = size_t(rng.uniform(0.2, 0.6) * fs);
      until_pause = size_t(rng.uniform(1.5, 4.0) * fs);
    } else {
      --until_pause;
    }

    double excitation = 0.0;
    if (voiced) {
      const double f0 = f0_base * (1.0 + 0.12 * std::sin(2.0 * kPi * 0.31 * t + p4));
      phase += f0 / fs;
      if (phase >= 1.0) {
        phase -= 1.0;
        excitation = 8.0 * (1.0 + 0.2 * rng.gaussian());
      }
      excitation += 0.02 * rng.gaussian();  // aspiration
    } else {
      excitation = 0.6 * rng.gaussian();
    }

    double v = f1.step(excitation) + 0.7 * f2.step(excitation) + 0.4 * f3.step(excitation);
    if (!voiced) v += 0.8 * fric.step(excitation);

    const double syl = std::sin(2.0 * kPi * syl_rate * t + p1);
    double env = std::pow(std::max(0.0, 0.55 + 0.45 * syl), 1.5);
    if (pause_left > 0) env *= 0.02;
    s.samples[i] = v * env;
  }

  const double peak = peak_abs(s.samples);
  if (peak > 0.0)
    for (double& v : s.samples) v *= 0.5 / peak;
  return s;
}

Signal make_gamma_signal(size_t n, uint64_t seed, double shape, int rate) {
  if (n == 0) throw Error(Errc::InvalidArgument, "signal length must be positive");
  Rng rng(seed);
  Signal s;
  s.sample_rate = rate;
  s.samples.resize(n);
  for (double& v : s.samples) {
    const double a = gamma_draw(rng, shape);
    v = rng.uniform() < 0.5 ? -a : a;
  }
  const double p = mean_power(s.samples);
  const double inv = 1.0 / std::sqrt(p);
  for (double& v : s.samples) v *= inv;
  return s;
}

}  // namespace roomsonde
