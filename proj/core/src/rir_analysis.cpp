#include "roomsonde/rir_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <string>

#include "roomsonde/errors.hpp"

namespace roomsonde {

const char* const kAnalyzerVersion = "roomsonde-analyzer/1.0.0";

namespace {

constexpr double kPi = 3.14159265358979323846;

// IEC-style octave bands and male speech weighting; weights sum to 1.
constexpr double kBandCenters[7] = {125, 250, 500, 1000, 2000, 4000, 8000};
constexpr double kBandWeights[7] = {0.13, 0.14, 0.11, 0.12, 0.19, 0.17, 0.14};
constexpr double kModFreqs[14] = {0.63, 0.8, 1.0, 1.25, 1.6, 2.0,  2.5,
                                  3.15, 4.0, 5.0, 6.3,  8.0, 10.0, 12.5};

}  // namespace

std::vector<std::string> flag_names(uint32_t flags) {
  static const std::pair<uint32_t, const char*> table[] = {
      {kFlagRt60Invalid, "rt60_invalid"}, {kFlagDrrCapped, "drr_capped"},
      {kFlagC50Capped, "c50_capped"},     {kFlagC80Capped, "c80_capped"},
      {kFlagStiBandSilent, "sti_band_silent"}, {kFlagSnrClean, "snr_clean"},
      {kFlagSilentChunk, "silent_chunk"},
  };
  std::vector<std::string> out;
  for (const auto& [bit, name] : table)
    if (flags & bit) out.push_back(name);
  return out;
}

uint32_t flags_from_names(const std::vector<std::string>& names) {
  uint32_t flags = 0;
  for (const auto& n : names) {
    if (n == "rt60_invalid") flags |= kFlagRt60Invalid;
    else if (n == "drr_capped") flags |= kFlagDrrCapped;
    else if (n == "c50_capped") flags |= kFlagC50Capped;
    else if (n == "c80_capped") flags |= kFlagC80Capped;
    else if (n == "sti_band_silent") flags |= kFlagStiBandSilent;
    else if (n == "snr_clean") flags |= kFlagSnrClean;
    else if (n == "silent_chunk") flags |= kFlagSilentChunk;
    else throw Error(Errc::InvalidArgument, "unknown label flag: " + n);
  }
  return flags;
}

Signal align_onset(const Signal& h) {
  const double peak = peak_abs(h.samples);
  if (h.samples.empty() || peak == 0.0)
    throw Error(Errc::AllZeroRir, "onset alignment of silent rir");
  const double thr = kOnsetThreshold * peak;
  size_t start = 0;
  while (start < h.samples.size() && std::fabs(h.samples[start]) < thr) ++start;
  Signal out;
  out.sample_rate = h.sample_rate;
  out.samples.assign(h.samples.begin() + long(start), h.samples.end());
  return out;
}

DecayCurve schroeder_decay(const Signal& h) {
  if (h.samples.empty()) throw Error(Errc::AllZeroRir, "schroeder of empty rir");
  const size_t n = h.samples.size();
  std::vector<double> tail(n);
  double acc = 0.0;
  for (size_t i = n; i-- > 0;) {
    acc += h.samples[i] * h.samples[i];
    tail[i] = acc;
  }
  if (acc == 0.0) throw Error(Errc::AllZeroRir, "schroeder of all-zero rir");

  DecayCurve d;
  d.times.resize(n);
  d.levels.resize(n);
  const double inv_rate = 1.0 / double(h.sample_rate);
  const double total = tail[0];
  for (size_t i = 0; i < n; ++i) {
    d.times[i] = double(i) * inv_rate;
    d.levels[i] = power_to_db(tail[i] / total);
  }
  return d;
}

double estimate_rt60(const DecayCurve& d) {
  const size_t n = d.levels.size();
  size_t lo = 0;
  while (lo < n && d.levels[lo] > -5.0) ++lo;
  size_t hi = lo;
  while (hi < n && d.levels[hi] > -35.0) ++hi;
  if (hi >= n)
    throw Error(Errc::InsufficientDecayRange, "decay curve never reaches -35 dB");
  // window = all points with level in [-35, -5]; hi is the first below -35
  const size_t count = hi - lo;
  if (count < 10)
    throw Error(Errc::DegenerateFit, "fewer than 10 points in the [-35, -5] dB window");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = lo; i < hi; ++i) {
    const double x = d.times[i], y = d.levels[i];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = double(count);
  const double denom = m * sxx - sx * sx;
  if (denom <= 0.0) throw Error(Errc::DegenerateFit, "singular rt60 fit");
  const double slope = (m * sxy - sx * sy) / denom;  // dB per second
  if (slope >= 0.0) throw Error(Errc::DegenerateFit, "non-decaying rt60 fit");
  return 2.0 * (-30.0 / slope);
}

double energy_ratio(const Signal& h, double split_ms) {
  if (h.samples.empty()) throw Error(Errc::AllZeroRir, "energy ratio of empty rir");
  // boundary sample (t == split) belongs to the late window
  const double split_samples = split_ms * 1e-3 * double(h.sample_rate);
  double early = 0.0, late = 0.0;
  for (size_t i = 0; i < h.samples.size(); ++i) {
    const double e = h.samples[i] * h.samples[i];
    if (double(i) < split_samples)
      early += e;
    else
      late += e;
  }
  const double total = early + late;
  if (total == 0.0) throw Error(Errc::AllZeroRir, "energy ratio of all-zero rir");
  if (late < 1e-12 * total)
    throw Error(Errc::ZeroLateEnergy, "no energy after the split point");
  return power_to_db(early / late);
}

std::vector<Biquad> butter_bandpass(double lo_hz, double hi_hz, double fs) {
  if (!(0.0 < lo_hz && lo_hz < hi_hz && hi_hz < fs / 2.0))
    throw Error(Errc::InvalidArgument, "band edges must satisfy 0 < lo < hi < Nyquist");
  using cd = std::complex<double>;

  // 2nd-order Butterworth prototype -> LP->BP in s -> bilinear to z.
  const cd proto[2] = {std::polar(1.0, 3.0 * kPi / 4.0), std::polar(1.0, 5.0 * kPi / 4.0)};
  const double wl = 2.0 * fs * std::tan(kPi * lo_hz / fs);
  const double wh = 2.0 * fs * std::tan(kPi * hi_hz / fs);
  const double w0sq = wl * wh;
  const double bw = wh - wl;

  cd apoles[4];
  for (int i = 0; i < 2; ++i) {
    const cd sc = proto[i] * (bw * 0.5);
    const cd disc = std::sqrt(sc * sc - w0sq);
    apoles[2 * i] = sc + disc;
    apoles[2 * i + 1] = sc - disc;
  }
  // analog zeros: two at s = 0; gain bw^2
  const double fs2 = 2.0 * fs;
  cd dpoles[4];
  cd den(1.0, 0.0);
  for (int i = 0; i < 4; ++i) {
    dpoles[i] = (fs2 + apoles[i]) / (fs2 - apoles[i]);
    den *= (fs2 - apoles[i]);
  }
  const double gain = (bw * bw) * (cd(fs2 * fs2, 0.0) / den).real();

  // conjugate pairing: poles arrive as (p, q) per prototype pole with q = conj
  // of the other prototype pole's p; sort by imag magnitude then match.
  cd ps[4] = {dpoles[0], dpoles[1], dpoles[2], dpoles[3]};
  std::sort(ps, ps + 4, [](const cd& a, const cd& b) { return a.imag() < b.imag(); });
  // after sorting: ps[0] = conj(ps[3]), ps[1] = conj(ps[2])
  const cd pair_a = ps[3], pair_b = ps[2];

  std::vector<Biquad> sos(2);
  // digital zeros: {+1, +1} from s=0 and {-1, -1} from degree; one of each per
  // section gives numerator z^2 - 1.
  sos[0] = {gain, 0.0, -gain, -2.0 * pair_a.real(), std::norm(pair_a)};
  sos[1] = {1.0, 0.0, -1.0, -2.0 * pair_b.real(), std::norm(pair_b)};
  return sos;
}

namespace {

void sos_forward(const std::vector<Biquad>& sos, std::vector<double>& x) {
  for (const auto& q : sos) {
    double z1 = 0.0, z2 = 0.0;  // direct form II transposed
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
}

constexpr size_t kFiltPad = 4096;

}  // namespace

std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x) {
  // zero-padding both sides bounds the forward and backward transients
  std::vector<double> buf(x.size() + 2 * kFiltPad, 0.0);
  std::copy(x.begin(), x.end(), buf.begin() + kFiltPad);
  sos_forward(sos, buf);
  std::reverse(buf.begin(), buf.end());
  sos_forward(sos, buf);
  std::reverse(buf.begin(), buf.end());
  return std::vector<double>(buf.begin() + kFiltPad, buf.begin() + long(kFiltPad + x.size()));
}

namespace {

struct MtfTable {
  double m[7][14];          // raw modulation transfer per band and mod freq
  double band_energy[7];    // post-filter energy per band
  double total_energy = 0;  // pre-filter energy
};

MtfTable compute_mtf(const std::vector<double>& h, double fs) {
  MtfTable t{};
  for (double v : h) t.total_energy += v * v;
  for (int b = 0; b < 7; ++b) {
    const double fc = kBandCenters[b];
    const double lo = fc / std::sqrt(2.0);
    const double hi = std::min(fc * std::sqrt(2.0), 0.95 * fs / 2.0);
    const auto sos = butter_bandpass(lo, hi, fs);
    const auto hb = filtfilt(sos, h);

    double energy = 0.0;
    for (double v : hb) energy += v * v;
    t.band_energy[b] = energy;
    for (int f = 0; f < 14; ++f) {
      // m(F) = |sum h^2 e^{-j2pi F t}| / sum h^2, direct summation
      const double w = 2.0 * kPi * kModFreqs[f] / fs;
      double re = 0.0, im = 0.0;
      for (size_t i = 0; i < hb.size(); ++i) {
        const double e = hb[i] * hb[i];
        re += e * std::cos(w * double(i));
        im -= e * std::sin(w * double(i));
      }
      t.m[b][f] = energy > 0.0 ? std::sqrt(re * re + im * im) / energy : 0.0;
    }
  }
  return t;
}

// MTF of a unit impulse through the identical filter path; divides out the
// filterbank's own modulation response so a perfect channel scores m = 1.
const MtfTable& impulse_calibration(size_t n, double fs) {
  static std::map<size_t, MtfTable> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    std::vector<double> imp(n, 0.0);
    imp[0] = 1.0;
    it = cache.emplace(n, compute_mtf(imp, fs)).first;
  }
  return it->second;
}

}  // namespace

StiResult compute_sti(const Signal& h) {
  if (h.samples.empty() || peak_abs(h.samples) == 0.0)
    throw Error(Errc::AllZeroRir, "sti of silent rir");

  const double fs = double(h.sample_rate);
  const size_t min_len = size_t(std::llround(kStiMinSeconds * fs));
  std::vector<double> x = h.samples;
  if (x.size() < min_len) x.resize(min_len, 0.0);

  const MtfTable mtf = compute_mtf(x, fs);
  const MtfTable& cal = impulse_calibration(x.size(), fs);

  StiResult r;
  double weighted = 0.0, weight_sum = 0.0;
  for (int b = 0; b < 7; ++b) {
    double mti = 0.0;
    if (mtf.band_energy[b] < 1e-12 * mtf.total_energy) {
      r.silent_band_mask |= (1u << b);
    } else {
      for (int f = 0; f < 14; ++f) {
        double m = cal.m[b][f] > 0.0 ? mtf.m[b][f] / cal.m[b][f] : 0.0;
        if (m > 1.0) m = 1.0;
        // apparent SNR from modulation depth, clipped to +/-15 dB
        double snr_app;
        if (m >= 1.0)
          snr_app = 15.0;
        else {
          snr_app = 10.0 * std::log10(m / (1.0 - m));
          snr_app = std::clamp(snr_app, -15.0, 15.0);
        }
        mti += (snr_app + 15.0) / 30.0;
      }
      mti /= 14.0;
    }
    weighted += kBandWeights[b] * mti;
    weight_sum += kBandWeights[b];
  }
  r.sti = std::clamp(weighted / weight_sum, 0.0, 1.0);
  return r;
}

AcousticLabel analyze_rir(const Signal& h) {
  const Signal a = align_onset(h);
  AcousticLabel label;

  try {
    label.rt60 = estimate_rt60(schroeder_decay(a));
  } catch (const Error&) {
    label.rt60 = 0.0;
    label.flags |= kFlagRt60Invalid;
  }

  struct RatioSlot {
    double split_ms;
    double AcousticLabel::* field;
    uint32_t cap_flag;
  };
  const RatioSlot slots[] = {
      {2.5, &AcousticLabel::drr, kFlagDrrCapped},
      {50.0, &AcousticLabel::c50, kFlagC50Capped},
      {80.0, &AcousticLabel::c80, kFlagC80Capped},
  };
  for (const auto& s : slots) {
    try {
      double v = energy_ratio(a, s.split_ms);
      if (v > kRatioCapDb) {
        v = kRatioCapDb;
        label.flags |= s.cap_flag;
      }
      label.*(s.field) = v;
    } catch (const Error& e) {
      if (e.code() != Errc::ZeroLateEnergy) throw;
      label.*(s.field) = kRatioCapDb;
      label.flags |= s.cap_flag;
    }
  }

  const StiResult sti = compute_sti(a);
  label.sti = sti.sti;
  if (sti.silent_band_mask) label.flags |= kFlagStiBandSilent;
  return label;
}

}  // namespace roomsonde
