#pragma once

#include <cmath>
#include <vector>

#include "roomsonde/nn/network.hpp"

namespace roomsonde::nn {

template <class T>
class Adam {
public:
  explicit Adam(std::vector<ParamRef<T>>& params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(params), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto& p : params_) {
      const size_t n = p.grad ? size_t(p.value->size()) : 0;
      m_.emplace_back(n, 0.0);
      v_.emplace_back(n, 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, double(t_));
    const double c2 = 1.0 - std::pow(b2_, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.grad) continue;
      double* m = m_[i].data();
      double* v = v_[i].data();
      for (size_t j = 0; j < size_t(p.value->size()); ++j) {
        const double g = double(p.grad->data[j]);
        m[j] = b1_ * m[j] + (1.0 - b1_) * g;
        v[j] = b2_ * v[j] + (1.0 - b2_) * g * g;
        p.value->data[j] -= T(lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_));
      }
    }
  }

  int64_t steps() const { return t_; }

private:
  std::vector<ParamRef<T>>& params_;
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace roomsonde::nn
