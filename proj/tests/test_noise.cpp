#include <doctest.h>

#include <cmath>

#include "roomsonde/errors.hpp"
#include "roomsonde/noise.hpp"
#include "roomsonde/signal.hpp"
#include "roomsonde/synth.hpp"
#include "roomsonde/wav.hpp"
#include "support/helpers.hpp"

using namespace roomsonde;

TEST_SUITE_BEGIN("noise");

TEST_CASE("generators are seeded and deterministic") {
  const Signal a = gen_white(4096, 9, 16000);
  const Signal b = gen_white(4096, 9, 16000);
  const Signal c = gen_white(4096, 10, 16000);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(a.sample_rate == 16000);

  const Signal p = gen_pink(4096, 9, 16000);
  const Signal q = gen_pink(4096, 9, 16000);
  CHECK(p.samples == q.samples);
}

TEST_CASE("white noise spectrum is flat") {
  const Signal s = gen_white(16000 * 12, 3, 16000);
  const double slope = testutil::octave_slope_db(s.samples, 16000, {125, 250, 500, 1000, 2000, 4000});
  CHECK(std::abs(slope) < 0.5);
}

TEST_CASE("pink noise falls 3 dB per octave") {
  const Signal s = gen_pink(16000 * 12, 3, 16000);
  const double slope = testutil::octave_slope_db(s.samples, 16000, {125, 250, 500, 1000, 2000, 4000});
  CHECK(slope == doctest::Approx(-3.0).epsilon(0.5 / 3.0));
}

TEST_CASE("noise kind names round trip") {
  CHECK(noise_kind_from_name(noise_kind_name(NoiseKind::White)) == NoiseKind::White);
  CHECK(noise_kind_from_name(noise_kind_name(NoiseKind::Pink)) == NoiseKind::Pink);
  CHECK(noise_kind_from_name(noise_kind_name(NoiseKind::Real)) == NoiseKind::Real);
  CHECK(noise_kind_from_name(noise_kind_name(NoiseKind::None)) == NoiseKind::None);
  CHECK_THROWS_AS(noise_kind_from_name("mauve"), Error);
}

TEST_CASE("realize_noise dispatches generated kinds") {
  NoiseSpec spec;
  spec.kind = NoiseKind::White;
  spec.seed = 4;
  const Signal w = realize_noise(spec, 1000, 16000);
  CHECK(w.samples.size() == 1000);
  CHECK(w.samples == gen_white(1000, 4, 16000).samples);

  spec.kind = NoiseKind::Pink;
  CHECK(realize_noise(spec, 1000, 16000).samples == gen_pink(1000, 4, 16000).samples);
}

TEST_CASE("realize_noise tiles real files") {
  testutil::TempDir tmp("noise");
  Signal src;
  src.sample_rate = 16000;
  src.samples.resize(500);
  for (size_t i = 0; i < src.samples.size(); ++i)
    src.samples[i] = std::sin(0.01 * double(i)) * 0.5;
  save_wav(tmp / "n.wav", src);

  NoiseSpec spec;
  spec.kind = NoiseKind::Real;
  spec.source = tmp / "n.wav";
  spec.seed = 1;
  const Signal out = realize_noise(spec, 1600, 16000);
  CHECK(out.samples.size() == 1600);
  CHECK(mean_power(out.samples) > 0.0);

  // same spec, same realization
  const Signal again = realize_noise(spec, 1600, 16000);
  CHECK(out.samples == again.samples);
}

TEST_CASE("scale_to_snr hits the target") {
  const Signal speech = make_speechlike(16000, 2.0, 21);
  const Signal noise = gen_pink(speech.samples.size(), 5, 16000);
  for (double target : {-5.0, 0.0, 10.0, 24.0}) {
    const Signal scaled = scale_to_snr(speech, noise, target);
    const double measured =
        power_to_db(mean_power(speech.samples) / mean_power(scaled.samples));
    CHECK(measured == doctest::Approx(target).epsilon(1e-9));
  }
}

TEST_CASE("scale_to_snr rejects bad inputs") {
  const Signal speech = make_speechlike(16000, 0.5, 2);
  Signal silent;
  silent.sample_rate = 16000;
  silent.samples.assign(speech.samples.size(), 0.0);
  const Signal noise = gen_white(speech.samples.size(), 3, 16000);
  CHECK_THROWS_AS(scale_to_snr(silent, noise, 0.0), Error);    // silent speech
  CHECK_THROWS_AS(scale_to_snr(speech, silent, 0.0), Error);   // silent noise
  Signal short_noise = gen_white(speech.samples.size() / 2, 3, 16000);
  CHECK_THROWS_AS(scale_to_snr(speech, short_noise, 0.0), Error);
}

TEST_SUITE_END();
