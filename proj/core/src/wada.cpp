#include "roomsonde/wada.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "roomsonde/errors.hpp"
#include "roomsonde/rng.hpp"

namespace roomsonde {
namespace {

constexpr double kSnrLo = -20.0;
constexpr double kSnrHi = 100.0;
constexpr double kSnrStep = 0.5;
constexpr double kAmpFloor = 1e-10;
// a raw dip deeper than this is structural, not Monte Carlo jitter
constexpr double kViolationLimit = 0.02;

}  // namespace

double g_statistic(const std::vector<double>& x) {
  double sum_abs = 0.0, sum_log = 0.0;
  int64_t n = 0;
  for (double v : x) {
    const double a = std::abs(v);
    if (a <= kAmpFloor) continue;
    sum_abs += a;
    sum_log += std::log(a);
    ++n;
  }
  if (n < 16) throw Error(Errc::SilentSignal, "too few non-silent samples");
  return std::log(sum_abs / double(n)) - sum_log / double(n);
}

WadaTable build_wada_table(uint64_t seed, int64_t samples_per_point) {
  if (samples_per_point < 1000000)
    throw Error(Errc::InvalidArgument, "wada table needs at least 1e6 samples per point");

  WadaTable t;
  for (double s = kSnrLo; s <= kSnrHi + 1e-9; s += kSnrStep) t.snr_db.push_back(s);
  t.g.assign(t.snr_db.size(), 0.0);

  // unit speech power: E[a^2] = shape*(shape+1)*theta^2
  const double theta = 1.0 / std::sqrt(kWadaShape * (kWadaShape + 1.0));

#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < int64_t(t.snr_db.size()); ++i) {
    Rng rng(derive_seed(seed, uint64_t(i)));
    const double sigma = std::sqrt(std::pow(10.0, -t.snr_db[size_t(i)] / 10.0));
    double sum_abs = 0.0, sum_log = 0.0;
    int64_t n = 0;
    for (int64_t k = 0; k < samples_per_point; ++k) {
      const double amp = gamma_draw(rng, kWadaShape) * theta;
      const double sp = rng.uniform() < 0.5 ? -amp : amp;
      const double z = sp + sigma * rng.gaussian();
      const double a = std::abs(z);
      if (a <= kAmpFloor) continue;
      sum_abs += a;
      sum_log += std::log(a);
      ++n;
    }
    t.g[size_t(i)] = std::log(sum_abs / double(n)) - sum_log / double(n);
  }

  double worst = 0.0;
  for (size_t i = 1; i < t.g.size(); ++i) worst = std::max(worst, t.g[i - 1] - t.g[i]);
  if (worst > kViolationLimit)
    throw Error(Errc::NonMonotoneTable, "g(snr) dips by " + std::to_string(worst));

  // pool adjacent violators, then a tiny ramp makes the map strictly invertible
  std::vector<double> val(t.g), w(t.g.size(), 1.0);
  std::vector<size_t> len(t.g.size(), 1);
  size_t m = 0;
  for (size_t i = 0; i < t.g.size(); ++i) {
    val[m] = t.g[i];
    w[m] = 1.0;
    len[m] = 1;
    ++m;
    while (m > 1 && val[m - 2] > val[m - 1]) {
      val[m - 2] = (w[m - 2] * val[m - 2] + w[m - 1] * val[m - 1]) / (w[m - 2] + w[m - 1]);
      w[m - 2] += w[m - 1];
      len[m - 2] += len[m - 1];
      --m;
    }
  }
  size_t pos = 0;
  for (size_t b = 0; b < m; ++b)
    for (size_t k = 0; k < len[b]; ++k) t.g[pos++] = val[b];
  for (size_t i = 1; i < t.g.size(); ++i) t.g[i] = std::max(t.g[i], t.g[i - 1] + 1e-9);
  return t;
}

double wada_snr(const std::vector<double>& x, const WadaTable& table) {
  if (table.snr_db.size() < 2 || table.g.size() != table.snr_db.size())
    throw Error(Errc::InvalidArgument, "wada table is malformed");
  const double g = g_statistic(x);
  if (g <= table.g.front()) return table.snr_db.front();
  if (g >= table.g.back()) return table.snr_db.back();
  const auto it = std::upper_bound(table.g.begin(), table.g.end(), g);
  const size_t hi = size_t(it - table.g.begin());
  const size_t lo = hi - 1;
  const double f = (g - table.g[lo]) / (table.g[hi] - table.g[lo]);
  return table.snr_db[lo] + f * (table.snr_db[hi] - table.snr_db[lo]);
}

void save_wada_table(const std::string& path, const WadaTable& table) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoFailure, "cannot open for write: " + path);
  os.write("RSWD", 4);
  const uint16_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), 2);
  const uint32_t n = uint32_t(table.snr_db.size());
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(table.snr_db.data()), std::streamsize(n * 8));
  os.write(reinterpret_cast<const char*>(table.g.data()), std::streamsize(n * 8));
  if (!os) throw Error(Errc::IoFailure, "write failed: " + path);
}

WadaTable load_wada_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoFailure, "cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RSWD", 4) != 0)
    throw Error(Errc::CorruptHeader, "not a wada table: " + path);
  uint16_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 2);
  if (!is || version != 1) throw Error(Errc::CorruptHeader, "wada table version");
  uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 4);
  if (!is || n < 2 || n > 100000) throw Error(Errc::CorruptHeader, "wada table size");
  WadaTable t;
  t.snr_db.resize(n);
  t.g.resize(n);
  is.read(reinterpret_cast<char*>(t.snr_db.data()), std::streamsize(n * 8));
  is.read(reinterpret_cast<char*>(t.g.data()), std::streamsize(n * 8));
  if (!is) throw Error(Errc::CorruptPayload, "wada table truncated");
  for (size_t i = 1; i < n; ++i)
    if (t.g[i] <= t.g[i - 1] || t.snr_db[i] <= t.snr_db[i - 1])
      throw Error(Errc::NonMonotoneTable, "loaded wada table is not increasing");
  return t;
}

}  // namespace roomsonde
