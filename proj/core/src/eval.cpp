#include "roomsonde/eval.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "roomsonde/errors.hpp"
#include "roomsonde/nn/model.hpp"
#include "roomsonde/rir_analysis.hpp"

namespace roomsonde {

using nlohmann::json;

double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size()) throw Error(Errc::LengthMismatch, "mae: pred vs truth");
  if (pred.empty()) throw Error(Errc::InvalidArgument, "mae of nothing");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
  return acc / double(pred.size());
}

std::vector<MaeBin> binned_mae(const std::vector<double>& abs_err,
                               const std::vector<double>& true_snr) {
  if (abs_err.size() != true_snr.size())
    throw Error(Errc::LengthMismatch, "binned_mae: errors vs snr");
  std::vector<MaeBin> bins;
  for (size_t b = 0; b + 1 < kSnrBinEdges.size(); ++b)
    bins.push_back({kSnrBinEdges[b], kSnrBinEdges[b + 1], 0, 0.0});
  for (size_t i = 0; i < abs_err.size(); ++i)
    for (auto& bin : bins)
      if (true_snr[i] > bin.lo && true_snr[i] <= bin.hi) {
        bin.mae += abs_err[i];
        ++bin.n;
        break;
      }
  for (auto& bin : bins)
    bin.mae = bin.n > 0 ? bin.mae / double(bin.n) : std::numeric_limits<double>::quiet_NaN();
  return bins;
}

bool target_valid(uint32_t flags, int target) {
  if (flags & kFlagSilentChunk) return false;
  switch (target) {
    case 0: return !(flags & kFlagRt60Invalid);
    case 1: return !(flags & kFlagDrrCapped);
    case 2: return !(flags & kFlagC50Capped);
    case 3: return !(flags & kFlagC80Capped);
    case 4: return !(flags & kFlagStiBandSilent);
    case 5: return !(flags & kFlagSnrClean);
    default: return true;
  }
}

EvalReport evaluate(const std::vector<EvalExample>& examples) {
  if (examples.empty()) throw Error(Errc::EmptySplit, "nothing to evaluate");
  EvalReport r;
  r.n = int64_t(examples.size());
  for (int t = 0; t < 6; ++t) {
    auto& te = r.targets[size_t(t)];
    std::vector<double> err_f, snr_f;
    double all = 0.0;
    for (const auto& e : examples) {
      const double err = std::abs(e.pred[size_t(t)] - e.truth[size_t(t)]);
      all += err;
      if (!target_valid(e.flags, t)) continue;
      err_f.push_back(err);
      snr_f.push_back(e.truth[5]);
    }
    te.mae_all = all / double(r.n);
    te.n_filtered = int64_t(err_f.size());
    te.mae_filtered = err_f.empty()
                          ? std::numeric_limits<double>::quiet_NaN()
                          : [&] {
                              double s = 0.0;
                              for (double v : err_f) s += v;
                              return s / double(err_f.size());
                            }();
    te.snr_bins = binned_mae(err_f, snr_f);
    for (const auto& b : te.snr_bins)
      if (b.n == 0) r.any_empty_bin = true;
  }
  return r;
}

void save_report(const std::string& path, const EvalReport& r,
                 const std::vector<EvalExample>& examples,
                 const std::map<std::string, std::string>& meta) {
  json j;
  j["n"] = r.n;
  j["any_empty_bin"] = r.any_empty_bin;
  for (const auto& [k, v] : meta) j["meta"][k] = v;
  for (int t = 0; t < 6; ++t) {
    const auto& te = r.targets[size_t(t)];
    json tj;
    tj["mae_filtered"] = te.mae_filtered;
    tj["n_filtered"] = te.n_filtered;
    tj["mae_all"] = te.mae_all;
    tj["snr_bins"] = json::array();
    for (const auto& b : te.snr_bins)
      tj["snr_bins"].push_back({{"lo", b.lo}, {"hi", b.hi}, {"n", b.n}, {"mae", b.mae}});
    j["targets"][nn::kTargetNames[size_t(t)]] = std::move(tj);
  }
  j["examples"] = json::array();
  for (const auto& e : examples)
    j["examples"].push_back({{"id", e.id},
                             {"pred", e.pred},
                             {"truth", e.truth},
                             {"flags", flag_names(e.flags)}});
  std::ofstream os(path);
  if (!os) throw Error(Errc::IoFailure, "cannot open for write: " + path);
  os << j.dump(2) << "\n";
  if (!os) throw Error(Errc::IoFailure, "write failed: " + path);
}

void export_calibration(const std::string& path, const std::vector<EvalExample>& examples) {
  if (examples.empty()) throw Error(Errc::EmptySplit, "nothing to calibrate");
  std::ofstream os(path);
  if (!os) throw Error(Errc::IoFailure, "cannot open for write: " + path);
  os << "param,bin_lo,bin_hi,n,mean_pred,std_pred\n";
  constexpr int kBins = 20;
  for (int t = 0; t < 6; ++t) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& e : examples) {
      lo = std::min(lo, e.truth[size_t(t)]);
      hi = std::max(hi, e.truth[size_t(t)]);
    }
    const double w = (hi - lo) / kBins;
    for (int b = 0; b < kBins; ++b) {
      const double blo = lo + b * w, bhi = b == kBins - 1 ? hi : lo + (b + 1) * w;
      double s = 0.0, q = 0.0;
      int64_t n = 0;
      for (const auto& e : examples) {
        const double tv = e.truth[size_t(t)];
        const bool in = w > 0.0 ? (tv >= blo && (b == kBins - 1 ? tv <= bhi : tv < bhi))
                                : b == 0;  // degenerate range: everything in bin 0
        if (!in) continue;
        s += e.pred[size_t(t)];
        q += e.pred[size_t(t)] * e.pred[size_t(t)];
        ++n;
      }
      const double mean = n > 0 ? s / double(n) : std::numeric_limits<double>::quiet_NaN();
      const double sd =
          n > 0 ? std::sqrt(std::max(0.0, q / double(n) - mean * mean))
                : std::numeric_limits<double>::quiet_NaN();
      char buf[192];
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%lld,%.6f,%.6f\n",
                    nn::kTargetNames[size_t(t)], blo, bhi, static_cast<long long>(n), mean, sd);
      os << buf;
    }
  }
  if (!os) throw Error(Errc::IoFailure, "write failed: " + path);
}

}  // namespace roomsonde
