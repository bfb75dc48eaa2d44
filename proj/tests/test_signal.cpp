#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "roomsonde/errors.hpp"
#include "roomsonde/fft.hpp"
#include "roomsonde/resample.hpp"
#include "roomsonde/rng.hpp"
#include "roomsonde/signal.hpp"
#include "roomsonde/wav.hpp"
#include "support/helpers.hpp"

using namespace roomsonde;

namespace {

constexpr double kPi = 3.14159265358979323846;

Signal sine(int rate, double freq, double seconds, double amp = 1.0) {
  Signal s;
  s.sample_rate = rate;
  const size_t n = size_t(seconds * rate);
  s.samples.resize(n);
  for (size_t i = 0; i < n; ++i) s.samples[i] = amp * std::sin(2.0 * kPi * freq * double(i) / rate);
  return s;
}

// minimal 16-bit PCM writer so load_wav can be exercised on integer input
void write_pcm16(const std::string& path, const std::vector<int16_t>& frames, uint16_t channels,
                 uint32_t rate) {
  const uint32_t data_bytes = uint32_t(frames.size() * 2);
  const uint32_t byte_rate = rate * channels * 2;
  const uint16_t block_align = channels * 2;
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVEfmt ", 8);
  u32(16);
  u16(1);
  u16(channels);
  u32(rate);
  u32(byte_rate);
  u16(block_align);
  u16(16);
  out.write("data", 4);
  u32(data_bytes);
  out.write(reinterpret_cast<const char*>(frames.data()), data_bytes);
}

}  // namespace

TEST_SUITE_BEGIN("signal");

TEST_CASE("mean_power basics") {
  CHECK(mean_power({1.0, -1.0, 1.0, -1.0}) == 1.0);
  CHECK(mean_power({0.0, 0.0}) == 0.0);
  const Signal s = sine(16000, 1000.0, 1.0);
  CHECK(mean_power(s.samples) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK_THROWS_AS(mean_power({}), Error);
}

TEST_CASE("db conversions invert") {
  CHECK(power_to_db(db_to_power(-17.3)) == doctest::Approx(-17.3));
  CHECK(db_to_amplitude(20.0) == doctest::Approx(10.0));
}

TEST_CASE("peak_normalize") {
  std::vector<double> x{1.0, -2.0, 0.5};
  CHECK(peak_normalize(x));
  CHECK(x[0] == doctest::Approx(0.5));
  CHECK(x[1] == doctest::Approx(-1.0));
  CHECK(x[2] == doctest::Approx(0.25));

  std::vector<double> once = x;
  peak_normalize(once);
  for (size_t i = 0; i < x.size(); ++i) CHECK(once[i] == x[i]);

  std::vector<double> z{0.0, 0.0, 0.0};
  CHECK_FALSE(peak_normalize(z));
  CHECK(z == std::vector<double>{0.0, 0.0, 0.0});

  std::vector<double> single{-0.25};
  CHECK(peak_normalize(single));
  CHECK(single[0] == doctest::Approx(-1.0));
}

TEST_CASE("convolve identities") {
  const std::vector<double> x{3.0, -1.0, 2.0, 0.5};
  CHECK(convolve(x, {1.0}) == x);
  const auto tri = convolve({1.0, 1.0}, {1.0, 1.0});
  REQUIRE(tri.size() == 3);
  CHECK(tri[0] == doctest::Approx(1.0));
  CHECK(tri[1] == doctest::Approx(2.0));
  CHECK(tri[2] == doctest::Approx(1.0));
}

TEST_CASE("convolve fft path matches direct") {
  Rng rng(42);
  std::vector<double> x(1000), h(257);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  for (auto& v : h) v = rng.uniform(-1.0, 1.0);
  const auto a = convolve_direct(x, h);
  const auto b = convolve_fft(x, h);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == x.size() + h.size() - 1);
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-6 * scale);
}

TEST_CASE("convolve is linear and commutative") {
  Rng rng(7);
  std::vector<double> x(300), h(40);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  for (auto& v : h) v = rng.uniform(-1.0, 1.0);
  const auto xh = convolve(x, h);
  const auto hx = convolve(h, x);
  std::vector<double> x3(x);
  for (auto& v : x3) v *= 3.0;
  const auto x3h = convolve(x3, h);
  for (size_t i = 0; i < xh.size(); ++i) {
    CHECK(xh[i] == doctest::Approx(hx[i]).epsilon(1e-6));
    CHECK(x3h[i] == doctest::Approx(3.0 * xh[i]).epsilon(1e-6));
  }
}

TEST_CASE("convolve signal overload checks rates") {
  Signal a = sine(16000, 100.0, 0.01);
  Signal b = sine(8000, 100.0, 0.01);
  CHECK_THROWS_AS(convolve(a, b), Error);
}

TEST_CASE("fft round trip") {
  Rng rng(3);
  std::vector<double> x(777);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  const size_t n = next_pow2(x.size());
  const auto spec = rfft(x, n);
  const auto back = irfft(spec, n);
  for (size_t i = 0; i < x.size(); ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-10));
}

TEST_CASE("resample 3:1 length and identity") {
  Signal s = sine(48000, 440.0, 1.0);
  const Signal d = resample(s, 16000);
  CHECK(d.sample_rate == 16000);
  CHECK(d.samples.size() == 16000);
  const Signal same = resample(s, 48000);
  CHECK(same.samples == s.samples);
}

TEST_CASE("resample sine fidelity") {
  const Signal s = sine(48000, 1000.0, 1.0);
  const Signal d = resample(s, 16000);
  for (size_t i = 100; i + 100 < d.samples.size(); ++i) {
    const double want = std::sin(2.0 * kPi * 1000.0 * double(i) / 16000.0);
    CHECK(std::abs(d.samples[i] - want) < 1e-3);
  }
}

TEST_CASE("resample round trip preserves band-limited content") {
  Signal s = sine(16000, 3000.0, 1.0, 0.5);
  const Signal up = resample(s, 48000);
  const Signal back = resample(up, 16000);
  REQUIRE(back.samples.size() == s.samples.size());
  for (size_t i = 200; i + 200 < s.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - s.samples[i]) < 1e-3);
}

TEST_CASE("wav float32 round trip") {
  testutil::TempDir tmp("wav");
  Signal s = sine(16000, 300.0, 0.25, 0.8);
  save_wav(tmp / "f32.wav", s);
  const Signal r = load_wav(tmp / "f32.wav");
  CHECK(r.sample_rate == 16000);
  REQUIRE(r.samples.size() == s.samples.size());
  for (size_t i = 0; i < s.samples.size(); ++i)
    CHECK(r.samples[i] == doctest::Approx(s.samples[i]).epsilon(1e-7));
}

TEST_CASE("wav pcm16 round trip quantizes") {
  testutil::TempDir tmp("wav");
  Signal s = sine(8000, 200.0, 0.1, 0.9);
  save_wav(tmp / "p16.wav", s, WavFormat::Pcm16);
  const Signal r = load_wav(tmp / "p16.wav");
  REQUIRE(r.samples.size() == s.samples.size());
  for (size_t i = 0; i < s.samples.size(); ++i) CHECK(std::abs(r.samples[i] - s.samples[i]) < 1e-4);
}

TEST_CASE("wav stereo downmix is channel mean") {
  testutil::TempDir tmp("wav");
  // interleaved L/R: L = full scale, R = 0
  std::vector<int16_t> frames{32767, 0, 32767, 0, -32768, 0};
  write_pcm16(tmp / "st.wav", frames, 2, 16000);
  const Signal r = load_wav(tmp / "st.wav");
  REQUIRE(r.samples.size() == 3);
  CHECK(r.samples[0] == doctest::Approx(32767.0 / 32768.0 / 2.0));
  CHECK(r.samples[2] == doctest::Approx(-0.5));
}

TEST_CASE("wav pcm16 full-scale mapping") {
  testutil::TempDir tmp("wav");
  write_pcm16(tmp / "fs.wav", {-32768, 32767, 0}, 1, 16000);
  const Signal r = load_wav(tmp / "fs.wav");
  REQUIRE(r.samples.size() == 3);
  CHECK(r.samples[0] == -1.0);
  CHECK(r.samples[1] == doctest::Approx(32767.0 / 32768.0));
  CHECK(r.samples[2] == 0.0);
}

TEST_CASE("wav rejects garbage") {
  testutil::TempDir tmp("wav");
  std::ofstream(tmp / "bad.wav") << "not a riff file at all";
  CHECK_THROWS_AS(load_wav(tmp / "bad.wav"), Error);
}

TEST_CASE("all_finite") {
  CHECK(all_finite({1.0, -2.0}));
  CHECK_FALSE(all_finite({1.0, std::nan("")}));
  CHECK_FALSE(all_finite({std::numeric_limits<double>::infinity()}));
}

TEST_SUITE_END();
