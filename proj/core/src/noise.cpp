#include "roomsonde/noise.hpp"

#include <cmath>

#include "roomsonde/errors.hpp"
#include "roomsonde/resample.hpp"
#include "roomsonde/rng.hpp"
#include "roomsonde/wav.hpp"

namespace roomsonde {

const char* noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::White: return "white";
    case NoiseKind::Pink: return "pink";
    case NoiseKind::Real: return "real";
    case NoiseKind::None: return "none";
  }
  return "none";
}

NoiseKind noise_kind_from_name(const std::string& name) {
  if (name == "white") return NoiseKind::White;
  if (name == "pink") return NoiseKind::Pink;
  if (name == "real") return NoiseKind::Real;
  if (name == "none") return NoiseKind::None;
  throw Error(Errc::InvalidArgument, "unknown noise kind: " + name);
}

Signal gen_white(size_t n, uint64_t seed, int rate) {
  if (n == 0) throw Error(Errc::InvalidArgument, "noise length must be positive");
  Rng rng(seed);
  Signal s;
  s.sample_rate = rate;
  s.samples.resize(n);
  for (double& v : s.samples) v = rng.gaussian();
  return s;
}

namespace {

struct OnePole {
  double b0, b1, a1;
  double z = 0.0;
  double step(double x) {
    const double y = b0 * x + z;
    z = b1 * x - a1 * y;
    return y;
  }
};

// Staggered pole/zero shelves, 3 per decade, averaging -3 dB/octave.
std::vector<OnePole> pink_cascade(double fs) {
  std::vector<OnePole> sections;
  const double ratio = std::pow(10.0, 1.0 / 3.0);
  const double zero_off = std::pow(10.0, 1.0 / 6.0);
  const double k = 2.0 * fs;
  for (double fp = 8.0; fp < 0.47 * fs; fp *= ratio) {
    const double fz = std::min(fp * zero_off, 0.95 * fs / 2.0);
    const double wp = k * std::tan(3.14159265358979323846 * fp / fs);
    const double wz = k * std::tan(3.14159265358979323846 * fz / fs);
    OnePole s;
    const double g = wp / wz;
    s.b0 = g * (wz + k) / (wp + k);
    s.b1 = g * (wz - k) / (wp + k);
    s.a1 = (wp - k) / (wp + k);
    sections.push_back(s);
  }
  return sections;
}

}  // namespace

Signal gen_pink(size_t n, uint64_t seed, int rate) {
  if (n == 0) throw Error(Errc::InvalidArgument, "noise length must be positive");
  Rng rng(seed);
  auto cascade = pink_cascade(double(rate));

  const size_t warmup = 8192;
  Signal s;
  s.sample_rate = rate;
  s.samples.resize(n);
  for (size_t i = 0; i < warmup + n; ++i) {
    double v = rng.gaussian();
    for (auto& sec : cascade) v = sec.step(v);
    if (i >= warmup) s.samples[i - warmup] = v;
  }
  const double p = mean_power(s.samples);
  const double inv = 1.0 / std::sqrt(p);
  for (double& v : s.samples) v *= inv;
  return s;
}

Signal realize_noise(const NoiseSpec& spec, size_t n, int rate) {
  switch (spec.kind) {
    case NoiseKind::White:
      return gen_white(n, spec.seed, rate);
    case NoiseKind::Pink:
      return gen_pink(n, spec.seed, rate);
    case NoiseKind::Real: {
      Signal src = load_wav(spec.source);
      if (src.sample_rate != rate) src = resample(src, rate);
      if (src.samples.empty() || peak_abs(src.samples) == 0.0)
        throw Error(Errc::SilentNoise, "real noise source is silent: " + spec.source);
      Rng rng(spec.seed);
      const size_t offset = size_t(rng.below(src.samples.size()));
      Signal out;
      out.sample_rate = rate;
      out.samples.resize(n);
      for (size_t i = 0; i < n; ++i)
        out.samples[i] = src.samples[(offset + i) % src.samples.size()];
      return out;
    }
    case NoiseKind::None:
      throw Error(Errc::InvalidArgument, "cannot realize noise of kind none");
  }
  throw Error(Errc::InvalidArgument, "bad noise kind");
}

Signal scale_to_snr(const Signal& speech, const Signal& noise, double target_db) {
  if (speech.sample_rate != noise.sample_rate)
    throw Error(Errc::SampleRateMismatch, "speech and noise rates differ");
  if (noise.samples.size() < speech.samples.size())
    throw Error(Errc::LengthMismatch, "noise shorter than speech");

  const double px = mean_power(speech.samples);
  if (px == 0.0) throw Error(Errc::SilentSpeech, "cannot target snr against silent speech");

  Signal out;
  out.sample_rate = noise.sample_rate;
  out.samples.assign(noise.samples.begin(), noise.samples.begin() + long(speech.samples.size()));
  const double pn = mean_power(out.samples);
  if (pn == 0.0) throw Error(Errc::SilentNoise, "cannot scale silent noise");

  const double g = std::sqrt(px / (pn * std::pow(10.0, target_db / 10.0)));
  for (double& v : out.samples) v *= g;
  return out;
}

}  // namespace roomsonde
