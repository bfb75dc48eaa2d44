#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "roomsonde/nn/model.hpp"
#include "roomsonde/nn/tensor.hpp"
#include "roomsonde/rng.hpp"

namespace roomsonde::nn {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatR<T>>;
template <class T>
using CMapM = Eigen::Map<const MatR<T>>;

template <class T>
struct ParamRef {
  int layer_index;  // position in the ModelSpec, used for weight-file naming
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;  // null for non-trainable state (running stats)
  int64_t fan_in;   // init scale hint
};

template <class T>
struct Stage {
  virtual ~Stage() = default;
  virtual TensorPtr<T> forward(const TensorPtr<T>& x, bool training, uint64_t seed) = 0;
  // dy is read-only; returns dx (skipped when need_dx is false).
  virtual TensorPtr<T> backward(const TensorPtr<T>& dy, bool need_dx) = 0;
  virtual void collect(std::vector<ParamRef<T>>& out) { (void)out; }
  virtual void release() {}
};

namespace detail {

template <class T>
T act_apply(Act a, T v) {
  if (a == Act::Relu) return v > T(0) ? v : T(0);
  return v > T(0) ? v : T(std::expm1(double(v)));
}

// derivative expressed through the activation's own output
template <class T>
T act_deriv_from_out(Act a, T y) {
  if (a == Act::Relu) return y > T(0) ? T(1) : T(0);
  return y > T(0) ? T(1) : y + T(1);
}

inline int n_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace detail

// Conv2D (same padding, stride 1) optionally fused with BatchNorm ->
// activation -> MaxPool(2x2) -> Dropout, the canonical block order. Fusion
// keeps only the BN-normalized activations plus byte masks for the backward
// pass; the full-size activation tensor lives only transiently.
template <class T>
class ConvStage : public Stage<T> {
public:
  ConvStage(int layer_idx, int k, int64_t h, int64_t w, int64_t cin, int64_t cout)
      : conv_idx_(layer_idx), k_(k), h_(h), w_(w), cin_(cin), cout_(cout),
        weight_({int64_t(k), int64_t(k), cin, cout}), bias_({cout}),
        dweight_(weight_.shape), dbias_(bias_.shape) {}

  void fuse_batchnorm(int layer_idx) {
    bn_idx_ = layer_idx;
    gamma_ = Tensor<T>({cout_});
    beta_ = Tensor<T>({cout_});
    run_mean_ = Tensor<T>({cout_});
    run_var_ = Tensor<T>({cout_});
    dgamma_ = Tensor<T>({cout_});
    dbeta_ = Tensor<T>({cout_});
    std::fill(gamma_.data.begin(), gamma_.data.end(), T(1));
    std::fill(run_var_.data.begin(), run_var_.data.end(), T(1));
  }
  void fuse_activation(Act a) { act_ = a; has_act_ = true; }
  void fuse_pool() { has_pool_ = true; }
  void fuse_dropout(double p) { drop_p_ = p; }

  Shape out_shape(int64_t n) const {
    int64_t oh = h_, ow = w_;
    if (has_pool_) {
      oh /= 2;
      ow /= 2;
    }
    return {n, oh, ow, cout_};
  }

  TensorPtr<T> forward(const TensorPtr<T>& x, bool training, uint64_t seed) override {
    const int64_t n = x->shape[0];
    x_ = x;
    training_ = training;

    auto conv_out = make_tensor<T>({n, h_, w_, cout_});
    const int64_t hw = h_ * w_;

#pragma omp parallel for schedule(static)
    for (int64_t ex = 0; ex < n; ++ex)
      conv_forward_one(x->ptr() + ex * hw * cin_, conv_out->ptr() + ex * hw * cout_);

    if (bn_idx_ >= 0) {
      if (training) {
        batch_stats(*conv_out);
        xhat_ = make_tensor<T>(conv_out->shape);
#pragma omp parallel for schedule(static)
        for (int64_t ex = 0; ex < n; ++ex) {
          const T* src = conv_out->ptr() + ex * hw * cout_;
          T* xh = xhat_->ptr() + ex * hw * cout_;
          T* out = conv_out->ptr() + ex * hw * cout_;
          for (int64_t i = 0; i < hw; ++i)
            for (int64_t c = 0; c < cout_; ++c) {
              const T v = (src[i * cout_ + c] - mu_[size_t(c)]) * inv_[size_t(c)];
              xh[i * cout_ + c] = v;
              out[i * cout_ + c] = gamma_.data[size_t(c)] * v + beta_.data[size_t(c)];
            }
        }
      } else {
#pragma omp parallel for schedule(static)
        for (int64_t ex = 0; ex < n; ++ex) {
          T* out = conv_out->ptr() + ex * hw * cout_;
          for (int64_t i = 0; i < hw; ++i)
            for (int64_t c = 0; c < cout_; ++c) {
              const T inv = T(1) / std::sqrt(run_var_.data[size_t(c)] + T(kBnEps));
              out[i * cout_ + c] =
                  gamma_.data[size_t(c)] * (out[i * cout_ + c] - run_mean_.data[size_t(c)]) * inv +
                  beta_.data[size_t(c)];
            }
        }
      }
    }

    if (has_act_) {
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < conv_out->size(); ++i)
        conv_out->data[size_t(i)] = detail::act_apply(act_, conv_out->data[size_t(i)]);
    }

    TensorPtr<T> out = conv_out;
    if (has_pool_) {
      const int64_t oh = h_ / 2, ow = w_ / 2;
      out = make_tensor<T>({n, oh, ow, cout_});
      if (training) pool_idx_.assign(size_t(n * oh * ow * cout_), 0);
#pragma omp parallel for schedule(static)
      for (int64_t ex = 0; ex < n; ++ex) {
        const T* src = conv_out->ptr() + ex * hw * cout_;
        T* dst = out->ptr() + ex * oh * ow * cout_;
        uint8_t* idx = training ? pool_idx_.data() + ex * oh * ow * cout_ : nullptr;
        for (int64_t r = 0; r < oh; ++r)
          for (int64_t cc = 0; cc < ow; ++cc)
            for (int64_t c = 0; c < cout_; ++c) {
              T best = src[((2 * r) * w_ + 2 * cc) * cout_ + c];
              uint8_t bi = 0;
              for (uint8_t q = 1; q < 4; ++q) {
                const T v = src[((2 * r + q / 2) * w_ + 2 * cc + q % 2) * cout_ + c];
                if (v > best) {
                  best = v;
                  bi = q;
                }
              }
              dst[(r * ow + cc) * cout_ + c] = best;
              if (idx) idx[(r * ow + cc) * cout_ + c] = bi;
            }
      }
    }

    if (bn_idx_ < 0 && training) {
      act_out_ = conv_out;  // no BN to reconstruct activations from
    }

    if (drop_p_ > 0.0 && training) {
      const int64_t per_ex = out->size() / n;
      drop_mask_.assign(size_t(out->size()), 1);
      const T scale = T(1.0 / (1.0 - drop_p_));
#pragma omp parallel for schedule(static)
      for (int64_t ex = 0; ex < n; ++ex) {
        Rng rng(derive_seed(seed, uint64_t(ex)));
        uint8_t* m = drop_mask_.data() + ex * per_ex;
        T* v = out->ptr() + ex * per_ex;
        for (int64_t i = 0; i < per_ex; ++i) {
          if (rng.uniform() < drop_p_) {
            m[i] = 0;
            v[i] = T(0);
          } else {
            v[i] *= scale;
          }
        }
      }
    }
    out_shape_ = out->shape;
    return out;
  }

  TensorPtr<T> backward(const TensorPtr<T>& dy, bool need_dx) override {
    const int64_t n = x_->shape[0];
    const int64_t hw = h_ * w_;

    // reconstruct the gradient at the activation output, full resolution
    auto d_full = make_tensor<T>({n, h_, w_, cout_});
    const T drop_scale = T(drop_p_ > 0.0 ? 1.0 / (1.0 - drop_p_) : 1.0);
    const int64_t per_ex = dy->size() / n;
#pragma omp parallel for schedule(static)
    for (int64_t ex = 0; ex < n; ++ex) {
      const T* g = dy->ptr() + ex * per_ex;
      T* df = d_full->ptr() + ex * hw * cout_;
      if (has_pool_) {
        const int64_t oh = h_ / 2, ow = w_ / 2;
        const uint8_t* idx = pool_idx_.data() + ex * oh * ow * cout_;
        const uint8_t* m = drop_p_ > 0.0 ? drop_mask_.data() + ex * per_ex : nullptr;
        for (int64_t r = 0; r < oh; ++r)
          for (int64_t cc = 0; cc < ow; ++cc)
            for (int64_t c = 0; c < cout_; ++c) {
              const int64_t o = (r * ow + cc) * cout_ + c;
              T gv = g[o];
              if (m) gv = m[o] ? gv * drop_scale : T(0);
              const uint8_t q = idx[o];
              df[((2 * r + q / 2) * w_ + 2 * cc + q % 2) * cout_ + c] = gv;
            }
      } else {
        const uint8_t* m = drop_p_ > 0.0 ? drop_mask_.data() + ex * per_ex : nullptr;
        for (int64_t i = 0; i < hw * cout_; ++i)
          df[i] = m ? (m[i] ? g[i] * drop_scale : T(0)) : g[i];
      }
    }

    if (has_act_) {
#pragma omp parallel for schedule(static)
      for (int64_t ex = 0; ex < n; ++ex) {
        T* df = d_full->ptr() + ex * hw * cout_;
        if (bn_idx_ >= 0) {
          const T* xh = xhat_->ptr() + ex * hw * cout_;
          for (int64_t i = 0; i < hw; ++i)
            for (int64_t c = 0; c < cout_; ++c) {
              const T y = detail::act_apply(
                  act_, gamma_.data[size_t(c)] * xh[i * cout_ + c] + beta_.data[size_t(c)]);
              df[i * cout_ + c] *= detail::act_deriv_from_out(act_, y);
            }
        } else {
          const T* ao = act_out_->ptr() + ex * hw * cout_;
          for (int64_t i = 0; i < hw * cout_; ++i)
            df[i] *= detail::act_deriv_from_out(act_, ao[i]);
        }
      }
    }

    if (bn_idx_ >= 0) bn_backward(*d_full);

    auto dx = need_dx ? make_tensor<T>(x_->shape) : nullptr;
    conv_backward(*d_full, dx.get());
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out) override {
    out.push_back({conv_idx_, "w", &weight_, &dweight_, k_ * int64_t(k_) * cin_});
    out.push_back({conv_idx_, "b", &bias_, &dbias_, 0});
    if (bn_idx_ >= 0) {
      out.push_back({bn_idx_, "gamma", &gamma_, &dgamma_, 0});
      out.push_back({bn_idx_, "beta", &beta_, &dbeta_, 0});
      out.push_back({bn_idx_, "running_mean", &run_mean_, nullptr, 0});
      out.push_back({bn_idx_, "running_var", &run_var_, nullptr, 0});
    }
  }

  void release() override {
    x_.reset();
    xhat_.reset();
    act_out_.reset();
    pool_idx_.clear();
    pool_idx_.shrink_to_fit();
    drop_mask_.clear();
    drop_mask_.shrink_to_fit();
  }

  static constexpr double kBnEps = 1e-5;
  static constexpr double kBnMomentum = 0.99;

private:
  void conv_forward_one(const T* x, T* y) {
    const int pad = k_ / 2;
    const int64_t cols = int64_t(k_) * k_ * cin_;
    const int64_t tile_rows = std::max<int64_t>(1, (1 << 21) / std::max<int64_t>(1, cols));
    std::vector<T> patches(size_t(std::min(tile_rows, h_ * w_) * cols));
    CMapM<T> wm(weight_.ptr(), cols, cout_);

    for (int64_t row0 = 0; row0 < h_ * w_; row0 += tile_rows) {
      const int64_t rows = std::min(tile_rows, h_ * w_ - row0);
      for (int64_t r = 0; r < rows; ++r) {
        const int64_t oh = (row0 + r) / w_, ow = (row0 + r) % w_;
        T* dst = patches.data() + r * cols;
        for (int dr = 0; dr < k_; ++dr) {
          const int64_t ih = oh + dr - pad;
          if (ih < 0 || ih >= h_) {
            std::memset(dst + int64_t(dr) * k_ * cin_, 0, size_t(k_ * cin_) * sizeof(T));
            continue;
          }
          for (int dc = 0; dc < k_; ++dc) {
            const int64_t iw = ow + dc - pad;
            T* cell = dst + (int64_t(dr) * k_ + dc) * cin_;
            if (iw < 0 || iw >= w_)
              std::memset(cell, 0, size_t(cin_) * sizeof(T));
            else
              std::memcpy(cell, x + (ih * w_ + iw) * cin_, size_t(cin_) * sizeof(T));
          }
        }
      }
      CMapM<T> pm(patches.data(), rows, cols);
      MapM<T> ym(y + row0 * cout_, rows, cout_);
      ym.noalias() = pm * wm;
      ym.rowwise() += CMapM<T>(bias_.ptr(), 1, cout_).row(0);
    }
  }

  void batch_stats(const Tensor<T>& conv_out) {
    const int64_t n = conv_out.shape[0];
    const int64_t hw = h_ * w_;
    // per-example partial sums reduced in example order: the statistics are
    // bit-identical for any thread count
    std::vector<double> psum(size_t(n * cout_), 0.0), psq(size_t(n * cout_), 0.0);
#pragma omp parallel for schedule(static)
    for (int64_t ex = 0; ex < n; ++ex) {
      const T* src = conv_out.ptr() + ex * hw * cout_;
      double* s = psum.data() + ex * cout_;
      double* q = psq.data() + ex * cout_;
      for (int64_t i = 0; i < hw; ++i)
        for (int64_t c = 0; c < cout_; ++c) {
          const double v = double(src[i * cout_ + c]);
          s[c] += v;
          q[c] += v * v;
        }
    }
    mu_.assign(size_t(cout_), T(0));
    inv_.assign(size_t(cout_), T(0));
    const double m = double(n * hw);
    for (int64_t c = 0; c < cout_; ++c) {
      double s = 0, q = 0;
      for (int64_t ex = 0; ex < n; ++ex) {
        s += psum[size_t(ex * cout_ + c)];
        q += psq[size_t(ex * cout_ + c)];
      }
      const double mean = s / m;
      const double var = std::max(0.0, q / m - mean * mean);
      mu_[size_t(c)] = T(mean);
      inv_[size_t(c)] = T(1.0 / std::sqrt(var + kBnEps));
      run_mean_.data[size_t(c)] =
          T(kBnMomentum * double(run_mean_.data[size_t(c)]) + (1.0 - kBnMomentum) * mean);
      run_var_.data[size_t(c)] =
          T(kBnMomentum * double(run_var_.data[size_t(c)]) + (1.0 - kBnMomentum) * var);
    }
  }

  void bn_backward(Tensor<T>& d) {
    const int64_t n = d.shape[0];
    const int64_t hw = h_ * w_;
    std::vector<double> p1(size_t(n * cout_), 0.0), p2(size_t(n * cout_), 0.0);
#pragma omp parallel for schedule(static)
    for (int64_t ex = 0; ex < n; ++ex) {
      const T* dd = d.ptr() + ex * hw * cout_;
      const T* xh = xhat_->ptr() + ex * hw * cout_;
      double* a = p1.data() + ex * cout_;
      double* b = p2.data() + ex * cout_;
      for (int64_t i = 0; i < hw; ++i)
        for (int64_t c = 0; c < cout_; ++c) {
          a[c] += double(dd[i * cout_ + c]);
          b[c] += double(dd[i * cout_ + c]) * double(xh[i * cout_ + c]);
        }
    }
    const double m = double(n * hw);
    std::vector<T> c1(static_cast<size_t>(cout_)), c2(static_cast<size_t>(cout_));
    for (int64_t c = 0; c < cout_; ++c) {
      double s1 = 0, s2 = 0;
      for (int64_t ex = 0; ex < n; ++ex) {
        s1 += p1[size_t(ex * cout_ + c)];
        s2 += p2[size_t(ex * cout_ + c)];
      }
      dbeta_.data[size_t(c)] += T(s1);
      dgamma_.data[size_t(c)] += T(s2);
      c1[size_t(c)] = T(s1 / m);
      c2[size_t(c)] = T(s2 / m);
    }
#pragma omp parallel for schedule(static)
    for (int64_t ex = 0; ex < n; ++ex) {
      T* dd = d.ptr() + ex * hw * cout_;
      const T* xh = xhat_->ptr() + ex * hw * cout_;
      for (int64_t i = 0; i < hw; ++i)
        for (int64_t c = 0; c < cout_; ++c)
          dd[i * cout_ + c] =
              gamma_.data[size_t(c)] * inv_[size_t(c)] *
              (dd[i * cout_ + c] - c1[size_t(c)] - xh[i * cout_ + c] * c2[size_t(c)]);
    }
  }

  void conv_backward(const Tensor<T>& d, Tensor<T>* dx) {
    const int64_t n = d.shape[0];
    const int64_t hw = h_ * w_;
    const int pad = k_ / 2;
    const int64_t cols = int64_t(k_) * k_ * cin_;
    const int nt = detail::n_threads();
    std::vector<std::vector<double>> dw_tls(static_cast<size_t>(nt));
    std::vector<std::vector<double>> db_tls(static_cast<size_t>(nt));

#pragma omp parallel num_threads(nt)
    {
#ifdef _OPENMP
      const int tid = omp_get_thread_num();
#else
      const int tid = 0;
#endif
      auto& dw = dw_tls[size_t(tid)];
      auto& db = db_tls[size_t(tid)];
      dw.assign(size_t(cols * cout_), 0.0);
      db.assign(size_t(cout_), 0.0);
      const int64_t tile_rows = std::max<int64_t>(1, (1 << 21) / std::max<int64_t>(1, cols));
      std::vector<T> patches(size_t(std::min(tile_rows, hw) * cols));
      std::vector<T> dpatch(patches.size());
      std::vector<double> dwf(size_t(cols * cout_));

#pragma omp for schedule(static)
      for (int64_t ex = 0; ex < n; ++ex) {
        const T* xp = x_->ptr() + ex * hw * cin_;
        const T* dp = d.ptr() + ex * hw * cout_;
        T* dxp = dx ? dx->ptr() + ex * hw * cin_ : nullptr;

        for (int64_t i = 0; i < hw * cout_; ++i) db[size_t(i % cout_)] += double(dp[i]);

        std::fill(dwf.begin(), dwf.end(), 0.0);
        for (int64_t row0 = 0; row0 < hw; row0 += tile_rows) {
          const int64_t rows = std::min(tile_rows, hw - row0);
          for (int64_t r = 0; r < rows; ++r) {
            const int64_t oh = (row0 + r) / w_, ow = (row0 + r) % w_;
            T* dst = patches.data() + r * cols;
            for (int dr = 0; dr < k_; ++dr) {
              const int64_t ih = oh + dr - pad;
              if (ih < 0 || ih >= h_) {
                std::memset(dst + int64_t(dr) * k_ * cin_, 0, size_t(k_ * cin_) * sizeof(T));
                continue;
              }
              for (int dc = 0; dc < k_; ++dc) {
                const int64_t iw = ow + dc - pad;
                T* cell = dst + (int64_t(dr) * k_ + dc) * cin_;
                if (iw < 0 || iw >= w_)
                  std::memset(cell, 0, size_t(cin_) * sizeof(T));
                else
                  std::memcpy(cell, xp + (ih * w_ + iw) * cin_, size_t(cin_) * sizeof(T));
              }
            }
          }
          CMapM<T> pm(patches.data(), rows, cols);
          CMapM<T> dm(dp + row0 * cout_, rows, cout_);
          MatR<T> dwt = pm.transpose() * dm;  // (cols, cout)
          for (int64_t i = 0; i < cols * cout_; ++i) dwf[size_t(i)] += double(dwt.data()[i]);

          if (dxp) {
            MapM<T> dpm(dpatch.data(), rows, cols);
            dpm.noalias() = dm * CMapM<T>(weight_.ptr(), cols, cout_).transpose();
            for (int64_t r = 0; r < rows; ++r) {
              const int64_t oh = (row0 + r) / w_, ow = (row0 + r) % w_;
              const T* src = dpatch.data() + r * cols;
              for (int dr = 0; dr < k_; ++dr) {
                const int64_t ih = oh + dr - pad;
                if (ih < 0 || ih >= h_) continue;
                for (int dc = 0; dc < k_; ++dc) {
                  const int64_t iw = ow + dc - pad;
                  if (iw < 0 || iw >= w_) continue;
                  T* cell = dxp + (ih * w_ + iw) * cin_;
                  const T* s = src + (int64_t(dr) * k_ + dc) * cin_;
                  for (int64_t ci = 0; ci < cin_; ++ci) cell[ci] += s[ci];
                }
              }
            }
          }
        }
        for (int64_t i = 0; i < cols * cout_; ++i) dw[size_t(i)] += dwf[size_t(i)];
      }
    }

    for (int t = 0; t < nt; ++t) {
      if (dw_tls[size_t(t)].empty()) continue;
      for (int64_t i = 0; i < cols * cout_; ++i)
        dweight_.data[size_t(i)] += T(dw_tls[size_t(t)][size_t(i)]);
      for (int64_t c = 0; c < cout_; ++c) dbias_.data[size_t(c)] += T(db_tls[size_t(t)][size_t(c)]);
    }
  }

  int conv_idx_;
  int bn_idx_ = -1;
  int k_;
  int64_t h_, w_, cin_, cout_;
  bool has_act_ = false, has_pool_ = false, training_ = false;
  Act act_ = Act::Relu;
  double drop_p_ = 0.0;

  Tensor<T> weight_, bias_, dweight_, dbias_;
  Tensor<T> gamma_, beta_, run_mean_, run_var_, dgamma_, dbeta_;

  TensorPtr<T> x_, xhat_, act_out_;
  std::vector<T> mu_, inv_;
  std::vector<uint8_t> pool_idx_, drop_mask_;
  Shape out_shape_;
};

template <class T>
class DenseStage : public Stage<T> {
public:
  DenseStage(int layer_idx, int64_t din, int64_t dout)
      : idx_(layer_idx), din_(din), dout_(dout), w_({din, dout}), b_({dout}),
        dw_(w_.shape), db_(b_.shape) {}

  TensorPtr<T> forward(const TensorPtr<T>& x, bool, uint64_t) override {
    x_ = x;
    const int64_t n = x->shape[0];
    auto y = make_tensor<T>({n, dout_});
    MapM<T>(y->ptr(), n, dout_).noalias() =
        CMapM<T>(x->ptr(), n, din_) * CMapM<T>(w_.ptr(), din_, dout_);
    MapM<T>(y->ptr(), n, dout_).rowwise() += CMapM<T>(b_.ptr(), 1, dout_).row(0);
    return y;
  }

  TensorPtr<T> backward(const TensorPtr<T>& dy, bool need_dx) override {
    const int64_t n = dy->shape[0];
    MapM<T>(dw_.ptr(), din_, dout_).noalias() +=
        CMapM<T>(x_->ptr(), n, din_).transpose() * CMapM<T>(dy->ptr(), n, dout_);
    MapM<T>(db_.ptr(), 1, dout_).noalias() += CMapM<T>(dy->ptr(), n, dout_).colwise().sum();
    if (!need_dx) return nullptr;
    auto dx = make_tensor<T>(x_->shape);
    MapM<T>(dx->ptr(), n, din_).noalias() =
        CMapM<T>(dy->ptr(), n, dout_) * CMapM<T>(w_.ptr(), din_, dout_).transpose();
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out) override {
    out.push_back({idx_, "w", &w_, &dw_, din_});
    out.push_back({idx_, "b", &b_, &db_, 0});
  }
  void release() override { x_.reset(); }

private:
  int idx_;
  int64_t din_, dout_;
  Tensor<T> w_, b_, dw_, db_;
  TensorPtr<T> x_;
};

// update gate z, reset gate r (sigmoid), candidate tanh; the reset scales the
// previous hidden state before the candidate's recurrent matmul
template <class T>
class GruStage : public Stage<T> {
public:
  GruStage(int layer_idx, int64_t t_steps, int64_t f, int64_t units, bool return_seq)
      : idx_(layer_idx), t_(t_steps), f_(f), u_(units), seq_(return_seq),
        wz_({f, units}), wr_({f, units}), wh_({f, units}),
        uz_({units, units}), ur_({units, units}), uh_({units, units}),
        bz_({units}), br_({units}), bh_({units}),
        dwz_(wz_.shape), dwr_(wr_.shape), dwh_(wh_.shape),
        duz_(uz_.shape), dur_(ur_.shape), duh_(uh_.shape),
        dbz_(bz_.shape), dbr_(br_.shape), dbh_(bh_.shape) {}

  TensorPtr<T> forward(const TensorPtr<T>& x, bool, uint64_t) override {
    x_ = x;
    const int64_t n = x->shape[0];
    z_ = Tensor<T>({n, t_, u_});
    r_ = Tensor<T>({n, t_, u_});
    hc_ = Tensor<T>({n, t_, u_});
    h_ = Tensor<T>({n, t_, u_});

    // input projections for all gates and steps in one GEMM each
    MatR<T> gx_z = CMapM<T>(x->ptr(), n * t_, f_) * CMapM<T>(wz_.ptr(), f_, u_);
    MatR<T> gx_r = CMapM<T>(x->ptr(), n * t_, f_) * CMapM<T>(wr_.ptr(), f_, u_);
    MatR<T> gx_h = CMapM<T>(x->ptr(), n * t_, f_) * CMapM<T>(wh_.ptr(), f_, u_);

    MatR<T> hprev = MatR<T>::Zero(n, u_);
    MatR<T> zt(n, u_), rt(n, u_), ht(n, u_), rh(n, u_);
    for (int64_t t = 0; t < t_; ++t) {
      // rows of the gate projections for step t are strided by t_
      auto rows_of = [&](MatR<T>& g) {
        MatR<T> out(n, u_);
        for (int64_t ex = 0; ex < n; ++ex) out.row(ex) = g.row(ex * t_ + t);
        return out;
      };
      zt = rows_of(gx_z) + hprev * CMapM<T>(uz_.ptr(), u_, u_);
      rt = rows_of(gx_r) + hprev * CMapM<T>(ur_.ptr(), u_, u_);
      zt.rowwise() += CMapM<T>(bz_.ptr(), 1, u_).row(0);
      rt.rowwise() += CMapM<T>(br_.ptr(), 1, u_).row(0);
      zt = zt.unaryExpr([](T v) { return T(1.0 / (1.0 + std::exp(-double(v)))); });
      rt = rt.unaryExpr([](T v) { return T(1.0 / (1.0 + std::exp(-double(v)))); });

      rh = rt.cwiseProduct(hprev);
      ht = rows_of(gx_h) + rh * CMapM<T>(uh_.ptr(), u_, u_);
      ht.rowwise() += CMapM<T>(bh_.ptr(), 1, u_).row(0);
      ht = ht.unaryExpr([](T v) { return T(std::tanh(double(v))); });

      hprev = (MatR<T>::Ones(n, u_) - zt).cwiseProduct(hprev) + zt.cwiseProduct(ht);

      for (int64_t ex = 0; ex < n; ++ex)
        for (int64_t j = 0; j < u_; ++j) {
          z_.data[size_t(((ex * t_) + t) * u_ + j)] = zt(ex, j);
          r_.data[size_t(((ex * t_) + t) * u_ + j)] = rt(ex, j);
          hc_.data[size_t(((ex * t_) + t) * u_ + j)] = ht(ex, j);
          h_.data[size_t(((ex * t_) + t) * u_ + j)] = hprev(ex, j);
        }
    }

    if (seq_) {
      auto y = make_tensor<T>({n, t_, u_});
      y->data = h_.data;
      return y;
    }
    auto y = make_tensor<T>({n, u_});
    for (int64_t ex = 0; ex < n; ++ex)
      for (int64_t j = 0; j < u_; ++j)
        y->data[size_t(ex * u_ + j)] = h_.data[size_t(((ex * t_) + (t_ - 1)) * u_ + j)];
    return y;
  }

  TensorPtr<T> backward(const TensorPtr<T>& dy, bool need_dx) override {
    const int64_t n = x_->shape[0];
    MatR<T> dh = MatR<T>::Zero(n, u_);
    MatR<T> dgx_z = MatR<T>::Zero(n * t_, u_);
    MatR<T> dgx_r = MatR<T>::Zero(n * t_, u_);
    MatR<T> dgx_h = MatR<T>::Zero(n * t_, u_);

    auto slice = [&](const Tensor<T>& m, int64_t t) {
      MatR<T> out(n, u_);
      for (int64_t ex = 0; ex < n; ++ex)
        for (int64_t j = 0; j < u_; ++j) out(ex, j) = m.data[size_t(((ex * t_) + t) * u_ + j)];
      return out;
    };

    if (!seq_) {
      for (int64_t ex = 0; ex < n; ++ex)
        for (int64_t j = 0; j < u_; ++j) dh(ex, j) = dy->data[size_t(ex * u_ + j)];
    }

    for (int64_t t = t_ - 1; t >= 0; --t) {
      if (seq_) {
        for (int64_t ex = 0; ex < n; ++ex)
          for (int64_t j = 0; j < u_; ++j) dh(ex, j) += dy->data[size_t(((ex * t_) + t) * u_ + j)];
      }
      MatR<T> zt = slice(z_, t), rt = slice(r_, t), ht = slice(hc_, t);
      MatR<T> hprev = t > 0 ? slice(h_, t - 1) : MatR<T>::Zero(n, u_);

      MatR<T> dz = dh.cwiseProduct(ht - hprev).cwiseProduct(zt).cwiseProduct(MatR<T>::Ones(n, u_) - zt);
      MatR<T> dhc = dh.cwiseProduct(zt).cwiseProduct(MatR<T>::Ones(n, u_) - ht.cwiseProduct(ht));

      MatR<T> rh = rt.cwiseProduct(hprev);
      duh_map() += rh.transpose() * dhc;
      dbh_map() += dhc.colwise().sum();
      MatR<T> drh = dhc * CMapM<T>(uh_.ptr(), u_, u_).transpose();
      MatR<T> dr = drh.cwiseProduct(hprev).cwiseProduct(rt).cwiseProduct(MatR<T>::Ones(n, u_) - rt);

      duz_map() += hprev.transpose() * dz;
      dur_map() += hprev.transpose() * dr;
      dbz_map() += dz.colwise().sum();
      dbr_map() += dr.colwise().sum();

      MatR<T> dhprev = dh.cwiseProduct(MatR<T>::Ones(n, u_) - zt) + drh.cwiseProduct(rt) +
                       dz * CMapM<T>(uz_.ptr(), u_, u_).transpose() +
                       dr * CMapM<T>(ur_.ptr(), u_, u_).transpose();

      for (int64_t ex = 0; ex < n; ++ex) {
        dgx_z.row(ex * t_ + t) = dz.row(ex);
        dgx_r.row(ex * t_ + t) = dr.row(ex);
        dgx_h.row(ex * t_ + t) = dhc.row(ex);
      }
      dh = dhprev;
    }

    MapM<T>(dwz_.ptr(), f_, u_).noalias() += CMapM<T>(x_->ptr(), n * t_, f_).transpose() * dgx_z;
    MapM<T>(dwr_.ptr(), f_, u_).noalias() += CMapM<T>(x_->ptr(), n * t_, f_).transpose() * dgx_r;
    MapM<T>(dwh_.ptr(), f_, u_).noalias() += CMapM<T>(x_->ptr(), n * t_, f_).transpose() * dgx_h;

    if (!need_dx) return nullptr;
    auto dx = make_tensor<T>(x_->shape);
    MapM<T> dxm(dx->ptr(), n * t_, f_);
    dxm.noalias() = dgx_z * CMapM<T>(wz_.ptr(), f_, u_).transpose();
    dxm.noalias() += dgx_r * CMapM<T>(wr_.ptr(), f_, u_).transpose();
    dxm.noalias() += dgx_h * CMapM<T>(wh_.ptr(), f_, u_).transpose();
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out) override {
    out.push_back({idx_, "wz", &wz_, &dwz_, f_ + u_});
    out.push_back({idx_, "wr", &wr_, &dwr_, f_ + u_});
    out.push_back({idx_, "wh", &wh_, &dwh_, f_ + u_});
    out.push_back({idx_, "uz", &uz_, &duz_, f_ + u_});
    out.push_back({idx_, "ur", &ur_, &dur_, f_ + u_});
    out.push_back({idx_, "uh", &uh_, &duh_, f_ + u_});
    out.push_back({idx_, "bz", &bz_, &dbz_, 0});
    out.push_back({idx_, "br", &br_, &dbr_, 0});
    out.push_back({idx_, "bh", &bh_, &dbh_, 0});
  }

  void release() override {
    x_.reset();
    for (Tensor<T>* t : {&z_, &r_, &hc_, &h_}) {
      t->data.clear();
      t->data.shrink_to_fit();
    }
  }

private:
  MapM<T> duz_map() { return MapM<T>(duz_.ptr(), u_, u_); }
  MapM<T> dur_map() { return MapM<T>(dur_.ptr(), u_, u_); }
  MapM<T> duh_map() { return MapM<T>(duh_.ptr(), u_, u_); }
  MapM<T> dbz_map() { return MapM<T>(dbz_.ptr(), 1, u_); }
  MapM<T> dbr_map() { return MapM<T>(dbr_.ptr(), 1, u_); }
  MapM<T> dbh_map() { return MapM<T>(dbh_.ptr(), 1, u_); }

  int idx_;
  int64_t t_, f_, u_;
  bool seq_;
  Tensor<T> wz_, wr_, wh_, uz_, ur_, uh_, bz_, br_, bh_;
  Tensor<T> dwz_, dwr_, dwh_, duz_, dur_, duh_, dbz_, dbr_, dbh_;
  TensorPtr<T> x_;
  Tensor<T> z_, r_, hc_, h_;
};

template <class T>
class ActStage : public Stage<T> {
public:
  explicit ActStage(Act a) : act_(a) {}

  TensorPtr<T> forward(const TensorPtr<T>& x, bool, uint64_t) override {
    auto y = make_tensor<T>(x->shape);
    for (int64_t i = 0; i < x->size(); ++i)
      y->data[size_t(i)] = detail::act_apply(act_, x->data[size_t(i)]);
    y_ = y;
    return y;
  }
  TensorPtr<T> backward(const TensorPtr<T>& dy, bool need_dx) override {
    if (!need_dx) return nullptr;
    auto dx = make_tensor<T>(dy->shape);
    for (int64_t i = 0; i < dy->size(); ++i)
      dx->data[size_t(i)] =
          dy->data[size_t(i)] * detail::act_deriv_from_out(act_, y_->data[size_t(i)]);
    return dx;
  }
  void release() override { y_.reset(); }

private:
  Act act_;
  TensorPtr<T> y_;
};

template <class T>
class DropStage : public Stage<T> {
public:
  explicit DropStage(double p) : p_(p) {}

  TensorPtr<T> forward(const TensorPtr<T>& x, bool training, uint64_t seed) override {
    if (!training || p_ <= 0.0) {
      mask_.clear();
      return x;
    }
    const int64_t n = x->shape[0];
    const int64_t per_ex = x->size() / n;
    auto y = make_tensor<T>(x->shape);
    mask_.assign(size_t(x->size()), 1);
    const T scale = T(1.0 / (1.0 - p_));
    for (int64_t ex = 0; ex < n; ++ex) {
      Rng rng(derive_seed(seed, uint64_t(ex)));
      for (int64_t i = 0; i < per_ex; ++i) {
        const size_t o = size_t(ex * per_ex + i);
        if (rng.uniform() < p_) {
          mask_[o] = 0;
          y->data[o] = T(0);
        } else {
          y->data[o] = x->data[o] * scale;
        }
      }
    }
    return y;
  }
  TensorPtr<T> backward(const TensorPtr<T>& dy, bool need_dx) override {
    if (!need_dx) return nullptr;
    if (mask_.empty()) return std::make_shared<Tensor<T>>(*dy);
    auto dx = make_tensor<T>(dy->shape);
    const T scale = T(1.0 / (1.0 - p_));
    for (int64_t i = 0; i < dy->size(); ++i)
      dx->data[size_t(i)] = mask_[size_t(i)] ? dy->data[size_t(i)] * scale : T(0);
    return dx;
  }

private:
  double p_;
  std::vector<uint8_t> mask_;
};

// standalone BatchNorm over the trailing channel axis (batch-stats training
// mode); the fused conv path is preferred for the big models
template <class T>
class BnStage : public Stage<T> {
public:
  BnStage(int layer_idx, int64_t channels)
      : idx_(layer_idx), c_(channels), gamma_({channels}), beta_({channels}),
        run_mean_({channels}), run_var_({channels}), dgamma_(gamma_.shape), dbeta_(beta_.shape) {
    std::fill(gamma_.data.begin(), gamma_.data.end(), T(1));
    std::fill(run_var_.data.begin(), run_var_.data.end(), T(1));
  }

  TensorPtr<T> forward(const TensorPtr<T>& x, bool training, uint64_t) override {
    const int64_t rows = x->size() / c_;
    auto y = make_tensor<T>(x->shape);
    if (training) {
      std::vector<double> s(size_t(c_), 0.0), q(size_t(c_), 0.0);
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t c = 0; c < c_; ++c) {
          const double v = double(x->data[size_t(i * c_ + c)]);
          s[size_t(c)] += v;
          q[size_t(c)] += v * v;
        }
      mu_.assign(size_t(c_), T(0));
      inv_.assign(size_t(c_), T(0));
      for (int64_t c = 0; c < c_; ++c) {
        const double mean = s[size_t(c)] / double(rows);
        const double var = std::max(0.0, q[size_t(c)] / double(rows) - mean * mean);
        mu_[size_t(c)] = T(mean);
        inv_[size_t(c)] = T(1.0 / std::sqrt(var + ConvStage<T>::kBnEps));
        run_mean_.data[size_t(c)] = T(ConvStage<T>::kBnMomentum * double(run_mean_.data[size_t(c)]) +
                                      (1.0 - ConvStage<T>::kBnMomentum) * mean);
        run_var_.data[size_t(c)] = T(ConvStage<T>::kBnMomentum * double(run_var_.data[size_t(c)]) +
                                     (1.0 - ConvStage<T>::kBnMomentum) * var);
      }
      xhat_ = make_tensor<T>(x->shape);
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t c = 0; c < c_; ++c) {
          const T v = (x->data[size_t(i * c_ + c)] - mu_[size_t(c)]) * inv_[size_t(c)];
          xhat_->data[size_t(i * c_ + c)] = v;
          y->data[size_t(i * c_ + c)] = gamma_.data[size_t(c)] * v + beta_.data[size_t(c)];
        }
    } else {
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t c = 0; c < c_; ++c) {
          const T inv = T(1) / std::sqrt(run_var_.data[size_t(c)] + T(ConvStage<T>::kBnEps));
          y->data[size_t(i * c_ + c)] =
              gamma_.data[size_t(c)] * (x->data[size_t(i * c_ + c)] - run_mean_.data[size_t(c)]) * inv +
              beta_.data[size_t(c)];
        }
    }
    return y;
  }

  TensorPtr<T> backward(const TensorPtr<T>& dy, bool need_dx) override {
    const int64_t rows = dy->size() / c_;
    std::vector<double> c1(size_t(c_), 0.0), c2(size_t(c_), 0.0);
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t c = 0; c < c_; ++c) {
        c1[size_t(c)] += double(dy->data[size_t(i * c_ + c)]);
        c2[size_t(c)] += double(dy->data[size_t(i * c_ + c)]) * double(xhat_->data[size_t(i * c_ + c)]);
      }
    for (int64_t c = 0; c < c_; ++c) {
      dbeta_.data[size_t(c)] += T(c1[size_t(c)]);
      dgamma_.data[size_t(c)] += T(c2[size_t(c)]);
    }
    if (!need_dx) return nullptr;
    auto dx = make_tensor<T>(dy->shape);
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t c = 0; c < c_; ++c)
        dx->data[size_t(i * c_ + c)] =
            gamma_.data[size_t(c)] * inv_[size_t(c)] *
            (dy->data[size_t(i * c_ + c)] - T(c1[size_t(c)] / double(rows)) -
             xhat_->data[size_t(i * c_ + c)] * T(c2[size_t(c)] / double(rows)));
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out) override {
    out.push_back({idx_, "gamma", &gamma_, &dgamma_, 0});
    out.push_back({idx_, "beta", &beta_, &dbeta_, 0});
    out.push_back({idx_, "running_mean", &run_mean_, nullptr, 0});
    out.push_back({idx_, "running_var", &run_var_, nullptr, 0});
  }
  void release() override { xhat_.reset(); }

private:
  int idx_;
  int64_t c_;
  Tensor<T> gamma_, beta_, run_mean_, run_var_, dgamma_, dbeta_;
  TensorPtr<T> xhat_;
  std::vector<T> mu_, inv_;
};

template <class T>
class PoolStage : public Stage<T> {
public:
  TensorPtr<T> forward(const TensorPtr<T>& x, bool, uint64_t) override {
    in_shape_ = x->shape;
    const int64_t n = x->shape[0], h = x->shape[1], w = x->shape[2], c = x->shape[3];
    const int64_t oh = h / 2, ow = w / 2;
    auto y = make_tensor<T>({n, oh, ow, c});
    idx_.assign(size_t(y->size()), 0);
    for (int64_t ex = 0; ex < n; ++ex)
      for (int64_t r = 0; r < oh; ++r)
        for (int64_t cc = 0; cc < ow; ++cc)
          for (int64_t ch = 0; ch < c; ++ch) {
            T best = x->data[size_t(((ex * h + 2 * r) * w + 2 * cc) * c + ch)];
            uint8_t bi = 0;
            for (uint8_t q = 1; q < 4; ++q) {
              const T v =
                  x->data[size_t(((ex * h + 2 * r + q / 2) * w + 2 * cc + q % 2) * c + ch)];
              if (v > best) {
                best = v;
                bi = q;
              }
            }
            const size_t o = size_t(((ex * oh + r) * ow + cc) * c + ch);
            y->data[o] = best;
            idx_[o] = bi;
          }
    return y;
  }

  TensorPtr<T> backward(const TensorPtr<T>& dy, bool need_dx) override {
    if (!need_dx) return nullptr;
    auto dx = make_tensor<T>(in_shape_);
    const int64_t n = in_shape_[0], h = in_shape_[1], w = in_shape_[2], c = in_shape_[3];
    const int64_t oh = h / 2, ow = w / 2;
    for (int64_t ex = 0; ex < n; ++ex)
      for (int64_t r = 0; r < oh; ++r)
        for (int64_t cc = 0; cc < ow; ++cc)
          for (int64_t ch = 0; ch < c; ++ch) {
            const size_t o = size_t(((ex * oh + r) * ow + cc) * c + ch);
            const uint8_t q = idx_[o];
            dx->data[size_t(((ex * h + 2 * r + q / 2) * w + 2 * cc + q % 2) * c + ch)] +=
                dy->data[o];
          }
    return dx;
  }

private:
  Shape in_shape_;
  std::vector<uint8_t> idx_;
};

template <class T>
class TimeFlattenStage : public Stage<T> {
public:
  TensorPtr<T> forward(const TensorPtr<T>& x, bool, uint64_t) override {
    in_shape_ = x->shape;
    auto y = std::make_shared<Tensor<T>>(*x);
    y->shape = {x->shape[0], x->shape[1], x->shape[2] * x->shape[3]};
    return y;
  }
  TensorPtr<T> backward(const TensorPtr<T>& dy, bool need_dx) override {
    if (!need_dx) return nullptr;
    auto dx = std::make_shared<Tensor<T>>(*dy);
    dx->shape = in_shape_;
    return dx;
  }

private:
  Shape in_shape_;
};

// global average over the two spatial axes
template <class T>
class GlobalFlattenStage : public Stage<T> {
public:
  TensorPtr<T> forward(const TensorPtr<T>& x, bool, uint64_t) override {
    in_shape_ = x->shape;
    const int64_t n = x->shape[0], hw = x->shape[1] * x->shape[2], c = x->shape[3];
    auto y = make_tensor<T>({n, c});
    std::vector<double> acc(static_cast<size_t>(c));
    for (int64_t ex = 0; ex < n; ++ex) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const T* src = x->ptr() + ex * hw * c;
      for (int64_t i = 0; i < hw; ++i)
        for (int64_t ch = 0; ch < c; ++ch) acc[size_t(ch)] += double(src[i * c + ch]);
      for (int64_t ch = 0; ch < c; ++ch)
        y->data[size_t(ex * c + ch)] = T(acc[size_t(ch)] / double(hw));
    }
    return y;
  }
  TensorPtr<T> backward(const TensorPtr<T>& dy, bool need_dx) override {
    if (!need_dx) return nullptr;
    auto dx = make_tensor<T>(in_shape_);
    const int64_t n = in_shape_[0], hw = in_shape_[1] * in_shape_[2], c = in_shape_[3];
    for (int64_t ex = 0; ex < n; ++ex)
      for (int64_t i = 0; i < hw; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
          dx->data[size_t((ex * hw + i) * c + ch)] = dy->data[size_t(ex * c + ch)] / T(hw);
    return dx;
  }

private:
  Shape in_shape_;
};

}  // namespace roomsonde::nn
