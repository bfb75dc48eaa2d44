#include "roomsonde/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "roomsonde/errors.hpp"
#include "roomsonde/nn/adam.hpp"

namespace roomsonde::nn {
namespace {

struct FeatScaler {
  std::vector<float> mean, inv;  // per coefficient
};

void fill_batch(const TrainSet& data, const std::vector<int64_t>& idx, int64_t lo, int64_t hi,
                const TargetStats& ts, const FeatScaler& fsc, Tensor<float>* x, Tensor<float>* y) {
  const int64_t fl = data.frames * data.coeffs;
  for (int64_t b = lo; b < hi; ++b) {
    const int64_t ex = idx[size_t(b)];
    const float* src = data.features.data() + ex * fl;
    float* dst = x->ptr() + (b - lo) * fl;
    for (int64_t i = 0; i < fl; ++i) {
      const size_t c = size_t(i % data.coeffs);
      dst[i] = (src[i] - fsc.mean[c]) * fsc.inv[c];
    }
    for (int t = 0; t < kNumTargets; ++t)
      y->data[size_t((b - lo) * kNumTargets + t)] =
          float((double(data.targets[size_t(ex * kNumTargets + t)]) - ts.mean[size_t(t)]) /
                ts.stdev[size_t(t)]);
  }
}

double eval_split(Network<float>& net, const TrainSet& data, const std::vector<int64_t>& idx,
                  const TargetStats& ts, const FeatScaler& fsc, int batch_size) {
  const int64_t n = int64_t(idx.size());
  double acc = 0.0;
  for (int64_t lo = 0; lo < n; lo += batch_size) {
    const int64_t hi = std::min<int64_t>(n, lo + batch_size);
    auto x = make_tensor<float>({hi - lo, data.frames, data.coeffs});
    auto y = make_tensor<float>({hi - lo, int64_t(kNumTargets)});
    fill_batch(data, idx, lo, hi, ts, fsc, x.get(), y.get());
    auto pred = net.forward(x, false, 0);
    acc += mse_loss(*pred, *y) * double(hi - lo);
  }
  return acc / double(n);
}

}  // namespace

TrainResult train_model(const TrainConfig& cfg, const TrainSet& data) {
  if (data.n <= 0) throw Error(Errc::EmptySplit, "training set is empty");
  if (int64_t(data.features.size()) != data.n * data.frames * data.coeffs ||
      int64_t(data.targets.size()) != data.n * kNumTargets)
    throw Error(Errc::ShapeMismatch, "training buffers vs declared counts");
  for (float v : data.features)
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteValue, "non-finite feature value");
  for (float v : data.targets)
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteValue, "non-finite target value");

  std::vector<int64_t> order(size_t(data.n));
  std::iota(order.begin(), order.end(), 0);
  int64_t n_val = 0;
  if (cfg.val_fraction > 0.0) {
    if (data.n < 2) throw Error(Errc::EmptySplit, "validation carve needs at least 2 examples");
    Rng rng(derive_seed(cfg.seed, 999));
    rng.shuffle(order);
    n_val = std::clamp<int64_t>(std::llround(double(data.n) * cfg.val_fraction), 1, data.n - 1);
  }
  std::vector<int64_t> val_idx(order.end() - n_val, order.end());
  std::vector<int64_t> train_idx(order.begin(), order.end() - n_val);

  TargetStats ts;
  {
    std::array<double, kNumTargets> s{}, q{};
    for (int64_t ex : train_idx)
      for (int t = 0; t < kNumTargets; ++t) {
        const double v = double(data.targets[size_t(ex * kNumTargets + t)]);
        s[size_t(t)] += v;
        q[size_t(t)] += v * v;
      }
    const double m = double(train_idx.size());
    for (int t = 0; t < kNumTargets; ++t) {
      ts.mean[size_t(t)] = s[size_t(t)] / m;
      const double var = std::max(0.0, q[size_t(t)] / m - ts.mean[size_t(t)] * ts.mean[size_t(t)]);
      ts.stdev[size_t(t)] = std::max(1e-6, std::sqrt(var));
    }
  }
  std::vector<double> fmean(size_t(data.coeffs), 0.0), fstd(size_t(data.coeffs), 1.0);
  FeatScaler fsc;
  {
    std::vector<double> s(size_t(data.coeffs), 0.0), q(size_t(data.coeffs), 0.0);
    const int64_t fl = data.frames * data.coeffs;
    for (int64_t ex : train_idx) {
      const float* src = data.features.data() + ex * fl;
      for (int64_t i = 0; i < fl; ++i) {
        const size_t c = size_t(i % data.coeffs);
        s[c] += double(src[i]);
        q[c] += double(src[i]) * double(src[i]);
      }
    }
    const double m = double(int64_t(train_idx.size()) * data.frames);
    for (size_t c = 0; c < size_t(data.coeffs); ++c) {
      fmean[c] = s[c] / m;
      fstd[c] = std::max(1e-6, std::sqrt(std::max(0.0, q[c] / m - fmean[c] * fmean[c])));
      fsc.mean.push_back(float(fmean[c]));
      fsc.inv.push_back(float(1.0 / fstd[c]));
    }
  }

  Network<float> net(build_model(cfg.model), cfg.frames, cfg.coeffs);
  net.init_params(derive_seed(cfg.seed, 1));
  Adam<float> adam(net.params(), cfg.lr);

  TrainResult res;
  double best = std::numeric_limits<double>::infinity();
  int bad = 0;
  bool stop = false;

  for (int epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 1000 + uint64_t(epoch)));
    rng.shuffle(train_idx);

    double acc = 0.0;
    int64_t seen = 0;
    for (int64_t lo = 0; lo < int64_t(train_idx.size()); lo += cfg.batch_size) {
      const int64_t hi = std::min<int64_t>(int64_t(train_idx.size()), lo + cfg.batch_size);
      auto x = make_tensor<float>({hi - lo, data.frames, data.coeffs});
      auto y = make_tensor<float>({hi - lo, int64_t(kNumTargets)});
      fill_batch(data, train_idx, lo, hi, ts, fsc, x.get(), y.get());

      const uint64_t step_seed = derive_seed(cfg.seed, 3000000 + uint64_t(res.updates));
      net.zero_grad();
      auto pred = net.forward(x, true, step_seed);
      auto dpred = make_tensor<float>(pred->shape);
      const double loss = mse_loss(*pred, *y, dpred.get());
      if (!std::isfinite(loss)) throw Error(Errc::NonFiniteLoss, "training diverged");
      net.backward(dpred);
      adam.step();
      ++res.updates;
      acc += loss * double(hi - lo);
      seen += hi - lo;
      if (cfg.max_updates > 0 && res.updates >= cfg.max_updates) {
        stop = true;
        break;
      }
    }
    const double train_loss = acc / double(seen);
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (n_val > 0) {
      val_loss = eval_split(net, data, val_idx, ts, fsc, cfg.batch_size);
      if (!std::isfinite(val_loss)) throw Error(Errc::NonFiniteLoss, "validation diverged");
    }
    res.history.push_back({epoch, train_loss, val_loss});
    if (cfg.progress)
      std::fprintf(stderr, "epoch %3d  train %.6f  val %s  updates %lld\n", epoch, train_loss,
                   n_val > 0 ? std::to_string(val_loss).c_str() : "-",
                   static_cast<long long>(res.updates));

    const double monitored = n_val > 0 ? val_loss : train_loss;
    if (monitored < best) {
      best = monitored;
      res.best_epoch = epoch;
      res.best_val = monitored;
      res.weights = snapshot(net, data.mfcc_canonical, data.mfcc_fp, ts, fmean, fstd);
      bad = 0;
    } else if (n_val > 0 && ++bad > cfg.patience) {
      stop = true;
    }
    if (cfg.target_train_loss > 0.0 && train_loss < cfg.target_train_loss) stop = true;
  }

  if (res.best_epoch < 0) {
    res.weights = snapshot(net, data.mfcc_canonical, data.mfcc_fp, ts, fmean, fstd);
    res.best_epoch = int(res.history.size()) - 1;
    res.best_val = res.history.empty() ? 0.0 : res.history.back().train_loss;
  }
  net.release();
  return res;
}

Predictor::Predictor(const WeightStore& ws)
    : ws_(ws), net_(build_model(ws.model_name), ws.frames, ws.coeffs) {
  restore(net_, ws_);
}

std::vector<float> Predictor::run(const float* features, int64_t n, const Fingerprint& mfcc_fp) {
  if (mfcc_fp != ws_.mfcc_fp)
    throw Error(Errc::FingerprintMismatch, "features were extracted with a different config");
  if (int64_t(ws_.feat_mean.size()) != ws_.coeffs)
    throw Error(Errc::ShapeMismatch, "feature stats vs coefficient count");
  const int64_t fl = ws_.frames * ws_.coeffs;
  std::vector<float> out(size_t(n * kNumTargets));
  std::vector<float> fmean(ws_.feat_mean.begin(), ws_.feat_mean.end());
  std::vector<float> finv;
  for (double s : ws_.feat_std) finv.push_back(float(1.0 / s));
  constexpr int64_t kBatch = 64;
  for (int64_t lo = 0; lo < n; lo += kBatch) {
    const int64_t hi = std::min(n, lo + kBatch);
    auto x = make_tensor<float>({hi - lo, ws_.frames, ws_.coeffs});
    for (int64_t b = lo; b < hi; ++b) {
      const float* src = features + b * fl;
      float* dst = x->ptr() + (b - lo) * fl;
      for (int64_t i = 0; i < fl; ++i) {
        const size_t c = size_t(i % ws_.coeffs);
        dst[i] = (src[i] - fmean[c]) * finv[c];
      }
    }
    auto pred = net_.forward(x, false, 0);
    for (int64_t b = lo; b < hi; ++b)
      for (int t = 0; t < kNumTargets; ++t) {
        double v = double(pred->data[size_t((b - lo) * kNumTargets + t)]) *
                       ws_.targets.stdev[size_t(t)] +
                   ws_.targets.mean[size_t(t)];
        if (t == 0) v = std::max(0.0, v);          // rt60
        if (t == 4) v = std::clamp(v, 0.0, 1.0);   // sti
        out[size_t(b * kNumTargets + t)] = float(v);
      }
  }
  net_.release();
  return out;
}

}  // namespace roomsonde::nn
