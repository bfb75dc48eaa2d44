#pragma once

#include <memory>
#include <vector>

#include "roomsonde/errors.hpp"
#include "roomsonde/nn/stages.hpp"

namespace roomsonde::nn {

// Groups the primitive layer list into executable stages. A Conv2D absorbs an
// immediately following BatchNorm / Activation / MaxPool / Dropout run (each
// at most once, in that order); everything else runs standalone.
template <class T>
class Network {
public:
  Network(const ModelSpec& spec, int64_t frames, int64_t coeffs)
      : spec_(spec), frames_(frames), coeffs_(coeffs) {
    validate_shapes(spec, frames, coeffs);
    Shape s = {frames, coeffs, 1};
    const auto& ls = spec.layers;
    for (size_t i = 0; i < ls.size(); ++i) {
      switch (ls[i].kind) {
        case LayerKind::Conv2D: {
          auto st = std::make_unique<ConvStage<T>>(int(i), ls[i].kernel, s[0], s[1], s[2],
                                                   ls[i].filters);
          s[2] = ls[i].filters;
          size_t j = i + 1;
          if (j < ls.size() && ls[j].kind == LayerKind::BatchNorm) st->fuse_batchnorm(int(j)), ++j;
          if (j < ls.size() && ls[j].kind == LayerKind::Activation) st->fuse_activation(ls[j].act), ++j;
          if (j < ls.size() && ls[j].kind == LayerKind::MaxPool) {
            st->fuse_pool();
            s[0] /= 2;
            s[1] /= 2;
            ++j;
          }
          if (j < ls.size() && ls[j].kind == LayerKind::Dropout) st->fuse_dropout(ls[j].p), ++j;
          stages_.push_back(std::move(st));
          i = j - 1;
          break;
        }
        case LayerKind::BatchNorm:
          stages_.push_back(std::make_unique<BnStage<T>>(int(i), s.back()));
          break;
        case LayerKind::Activation:
          stages_.push_back(std::make_unique<ActStage<T>>(ls[i].act));
          break;
        case LayerKind::MaxPool:
          stages_.push_back(std::make_unique<PoolStage<T>>());
          s[0] /= 2;
          s[1] /= 2;
          break;
        case LayerKind::Dropout:
          stages_.push_back(std::make_unique<DropStage<T>>(ls[i].p));
          break;
        case LayerKind::TimeFlatten:
          stages_.push_back(std::make_unique<TimeFlattenStage<T>>());
          s = {s[0], s[1] * s[2]};
          break;
        case LayerKind::Gru: {
          const bool seq = i + 1 < ls.size() && ls[i + 1].kind == LayerKind::Gru;
          stages_.push_back(std::make_unique<GruStage<T>>(int(i), s[0], s[1], ls[i].units, seq));
          s = seq ? Shape{s[0], int64_t(ls[i].units)} : Shape{int64_t(ls[i].units)};
          break;
        }
        case LayerKind::Dense:
          stages_.push_back(std::make_unique<DenseStage<T>>(int(i), s[0], ls[i].units));
          s = {int64_t(ls[i].units)};
          break;
        case LayerKind::GlobalFlatten:
          stages_.push_back(std::make_unique<GlobalFlattenStage<T>>());
          s = {s[2]};
          break;
      }
    }
    for (auto& st : stages_) st->collect(params_);
  }

  // x is (n, frames, coeffs); the leading conv sees it as (n, H, W, 1)
  TensorPtr<T> forward(const TensorPtr<T>& x, bool training, uint64_t step_seed) {
    auto cur = std::make_shared<Tensor<T>>(*x);
    cur->shape = {x->shape[0], frames_, coeffs_, 1};
    for (size_t i = 0; i < stages_.size(); ++i)
      cur = stages_[i]->forward(cur, training, derive_seed(step_seed, uint64_t(i)));
    return cur;
  }

  void backward(const TensorPtr<T>& dloss) {
    TensorPtr<T> d = dloss;
    for (size_t i = stages_.size(); i-- > 0;) d = stages_[i]->backward(d, i > 0);
  }

  std::vector<ParamRef<T>>& params() { return params_; }

  void zero_grad() {
    for (auto& p : params_)
      if (p.grad) p.grad->zero();
  }

  // scaled uniform +-sqrt(6/fan_in) for weight matrices; biases stay zero,
  // BN scale stays one
  void init_params(uint64_t seed) {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.grad || p.fan_in <= 0) continue;
      Rng rng(derive_seed(seed, uint64_t(i)));
      const double bound = std::sqrt(6.0 / double(p.fan_in));
      for (auto& v : p.value->data) v = T(rng.uniform(-bound, bound));
    }
  }

  void release() {
    for (auto& st : stages_) st->release();
  }

  int64_t trainable_count() const {
    int64_t n = 0;
    for (const auto& p : params_)
      if (p.grad) n += p.value->size();
    return n;
  }

  const ModelSpec& spec() const { return spec_; }
  int64_t frames() const { return frames_; }
  int64_t coeffs() const { return coeffs_; }

private:
  ModelSpec spec_;
  int64_t frames_, coeffs_;
  std::vector<std::unique_ptr<Stage<T>>> stages_;
  std::vector<ParamRef<T>> params_;
};

// mean squared error over every output element; fills dpred with dL/dpred
template <class T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* dpred = nullptr) {
  if (pred.shape != target.shape) throw Error(Errc::ShapeMismatch, "mse: pred vs target");
  const int64_t n = pred.size();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = double(pred.data[size_t(i)]) - double(target.data[size_t(i)]);
    acc += d * d;
    if (dpred) dpred->data[size_t(i)] = T(2.0 * d / double(n));
  }
  return acc / double(n);
}

}  // namespace roomsonde::nn
