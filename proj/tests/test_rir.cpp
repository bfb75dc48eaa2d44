#include <doctest.h>

#include <cmath>

#include "roomsonde/errors.hpp"
#include "roomsonde/rir_analysis.hpp"
#include "roomsonde/rng.hpp"
#include "roomsonde/synth.hpp"
#include "support/helpers.hpp"

using namespace roomsonde;

namespace {

Signal from_samples(std::vector<double> v, int rate = 16000) {
  Signal s;
  s.samples = std::move(v);
  s.sample_rate = rate;
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("rir");

TEST_CASE("align_onset strips leading silence") {
  const Signal a = align_onset(from_samples({0.0, 0.0, 0.0, 1.0, 0.5}));
  REQUIRE(a.samples.size() == 2);
  CHECK(a.samples[0] == 1.0);
  CHECK(a.samples[1] == 0.5);

  const Signal b = align_onset(from_samples({1.0, 0.5, 0.25}));
  CHECK(b.samples.size() == 3);

  // 1% precursor is below the 5% threshold
  const Signal c = align_onset(from_samples({0.01, 0.0, 1.0}));
  REQUIRE(c.samples.size() == 1);
  CHECK(c.samples[0] == 1.0);

  CHECK_THROWS_AS(align_onset(from_samples({0.0, 0.0})), Error);
}

TEST_CASE("schroeder_decay hand case") {
  // h^2 = [0.5, 0.25, 0.25]; tails are 1.0, 0.5, 0.25
  const Signal h = from_samples({std::sqrt(0.5), 0.5, 0.5});
  const DecayCurve d = schroeder_decay(h);
  REQUIRE(d.levels.size() == 3);
  CHECK(d.levels[0] == 0.0);
  CHECK(d.levels[1] == doctest::Approx(-3.0103).epsilon(1e-3));
  CHECK(d.levels[2] == doctest::Approx(-6.0206).epsilon(1e-3));
  CHECK(d.times[0] == 0.0);
  CHECK(d.times[1] == doctest::Approx(1.0 / 16000.0));
}

TEST_CASE("schroeder_decay is non-increasing with 0 dB start") {
  const Signal h = make_noisy_exp_rir(16000, 0.4, 0.8, 11, 3.0);
  const DecayCurve d = schroeder_decay(align_onset(h));
  CHECK(d.levels[0] == 0.0);
  for (size_t i = 1; i < d.levels.size(); ++i) CHECK(d.levels[i] <= d.levels[i - 1]);
}

TEST_CASE("schroeder_decay of exponential rir is a straight line") {
  const Signal h = make_exp_rir(16000, 0.5, 1.0);
  const DecayCurve d = schroeder_decay(h);
  // fit over the clean middle, far from tail truncation
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  size_t n = 0;
  for (size_t i = 0; i < d.times.size(); ++i) {
    if (d.levels[i] < -40.0 || d.levels[i] > -1.0) continue;
    sx += d.times[i];
    sy += d.levels[i];
    sxx += d.times[i] * d.times[i];
    sxy += d.times[i] * d.levels[i];
    syy += d.levels[i] * d.levels[i];
    ++n;
  }
  const double slope = (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx);
  const double r = (double(n) * sxy - sx * sy) /
                   std::sqrt((double(n) * sxx - sx * sx) * (double(n) * syy - sy * sy));
  CHECK(slope == doctest::Approx(-120.0).epsilon(0.01));  // -60 dB per T60 = 0.5 s
  CHECK(r * r > 0.9999);
}

TEST_CASE("estimate_rt60 analytic exponential") {
  for (double t60 : {0.3, 0.5, 1.0}) {
    const Signal h = make_exp_rir(16000, t60, 2.0 * t60);
    const double est = estimate_rt60(schroeder_decay(h));
    CHECK(est == doctest::Approx(t60).epsilon(0.01));
  }
}

TEST_CASE("estimate_rt60 straight line at -60 dB/s") {
  DecayCurve d;
  for (int i = 0; i <= 1000; ++i) {
    d.times.push_back(double(i) * 1e-3);
    d.levels.push_back(-60.0 * double(i) * 1e-3);
  }
  CHECK(estimate_rt60(d) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("estimate_rt60 degenerate inputs") {
  const Signal impulse = from_samples({1.0});
  CHECK_THROWS_AS(estimate_rt60(schroeder_decay(impulse)), Error);

  DecayCurve shallow;  // never reaches -35 dB
  for (int i = 0; i < 100; ++i) {
    shallow.times.push_back(double(i) * 1e-3);
    shallow.levels.push_back(-20.0 * double(i) / 100.0);
  }
  CHECK_THROWS_AS(estimate_rt60(shallow), Error);
}

TEST_CASE("energy_ratio hand case") {
  // 16 kHz: split 2.5 ms = 40 samples. 40 early samples of amp 2, 40 late of amp 1.
  std::vector<double> v(80, 1.0);
  for (size_t i = 0; i < 40; ++i) v[i] = 2.0;
  const double drr = energy_ratio(from_samples(v), 2.5);
  CHECK(drr == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-9));
}

TEST_CASE("energy_ratio boundary sample is late") {
  // split at 2 samples: [a, a | b, ...]; with 1 kHz rate split_ms 2.0 -> 2 samples
  const double r = energy_ratio(from_samples({1.0, 1.0, 1.0, 1.0}, 1000), 2.0);
  CHECK(r == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("energy_ratio zero late energy throws") {
  std::vector<double> v(100, 0.0);
  v[0] = 1.0;
  CHECK_THROWS_AS(energy_ratio(from_samples(v), 2.5), Error);
}

TEST_CASE("sti of unit impulse is exactly one") {
  std::vector<double> v(160, 0.0);
  v[0] = 1.0;
  const StiResult r = compute_sti(from_samples(v));
  CHECK(r.sti == 1.0);
  CHECK(r.silent_band_mask == 0);
}

TEST_CASE("sti decreases with reverberation") {
  // broadband carrier: the smooth deterministic envelope has no in-band
  // temporal spread, so the mtf method would score it as a clean channel
  double prev = 2.0;
  for (double t60 : {0.2, 0.8, 2.0}) {
    const Signal h = make_noisy_exp_rir(16000, t60, 1.5 * t60, 7, 0.0);
    const double sti = compute_sti(h).sti;
    CHECK(sti < prev);
    CHECK(sti >= 0.0);
    CHECK(sti <= 1.0);
    prev = sti;
  }
}

TEST_CASE("butter_bandpass frequency response") {
  const auto sos = butter_bandpass(1000.0, 2000.0, 16000.0);
  REQUIRE(sos.size() == 2);
  auto gain_at = [&](double freq) {
    // steady-state amplitude after filtfilt of a long sine
    const size_t n = 16000;
    std::vector<double> x(n);
    for (size_t i = 0; i < n; ++i)
      x[i] = std::sin(2.0 * 3.14159265358979323846 * freq * double(i) / 16000.0);
    const auto y = filtfilt(sos, x);
    double peak = 0.0;
    for (size_t i = n / 4; i < 3 * n / 4; ++i) peak = std::max(peak, std::abs(y[i]));
    return peak;
  };
  CHECK(gain_at(1414.0) == doctest::Approx(1.0).epsilon(0.01));  // center
  CHECK(gain_at(250.0) < 0.01);                                  // two octaves below
  CHECK(gain_at(8000.0 - 100.0) < 0.01);
  CHECK_THROWS_AS(butter_bandpass(2000.0, 1000.0, 16000.0), Error);
}

TEST_CASE("filtfilt is zero phase") {
  // symmetric pulse stays symmetric around its center
  const auto sos = butter_bandpass(500.0, 3000.0, 16000.0);
  std::vector<double> x(4001, 0.0);
  for (int i = -50; i <= 50; ++i)
    x[size_t(2000 + i)] = std::cos(2.0 * 3.14159265358979323846 * 1500.0 * i / 16000.0) *
                          (1.0 - std::abs(i) / 51.0);
  const auto y = filtfilt(sos, x);
  for (int i = 1; i <= 1500; ++i)
    CHECK(y[size_t(2000 + i)] == doctest::Approx(y[size_t(2000 - i)]).epsilon(1e-6));
}

TEST_CASE("analyze_rir nesting and flags") {
  const Signal h = make_noisy_exp_rir(16000, 0.6, 1.2, 5, 6.0);
  const AcousticLabel l = analyze_rir(h);
  CHECK(l.c80 >= l.c50);
  CHECK(l.c50 >= l.drr);
  CHECK(l.rt60 == doctest::Approx(0.6).epsilon(0.05));
  CHECK(l.flags == 0);
  CHECK_FALSE(l.snr.has_value());

  // unit impulse: no decay range, all ratios capped, sti exactly 1
  std::vector<double> v(160, 0.0);
  v[0] = 1.0;
  Signal imp = from_samples(v);
  const AcousticLabel li = analyze_rir(imp);
  CHECK((li.flags & kFlagRt60Invalid));
  CHECK((li.flags & kFlagDrrCapped));
  CHECK(li.rt60 == 0.0);
  CHECK(li.drr == 60.0);
  CHECK(li.sti == 1.0);
}

TEST_CASE("flag names round trip") {
  const uint32_t flags = kFlagRt60Invalid | kFlagC50Capped | kFlagSnrClean;
  CHECK(flags_from_names(flag_names(flags)) == flags);
  CHECK(flag_names(0).empty());
  CHECK_THROWS_AS(flags_from_names({"no_such_flag"}), Error);
}

TEST_SUITE_END();
