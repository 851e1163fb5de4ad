// Adam with default moment constants.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace fas::nn {

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0f), v_(n, 0.0f) {}

  void step(float* params, const float* grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    const float b1 = static_cast<float>(beta1_);
    const float b2 = static_cast<float>(beta2_);
    const float alpha = static_cast<float>(lr_ * std::sqrt(bc2) / bc1);
    const float eps = static_cast<float>(eps_ * std::sqrt(bc2));
    for (std::size_t i = 0; i < m_.size(); ++i) {
      const float g = grads[i];
      m_[i] = b1 * m_[i] + (1.0f - b1) * g;
      v_[i] = b2 * v_[i] + (1.0f - b2) * g * g;
      params[i] -= alpha * m_[i] / (std::sqrt(v_[i]) + eps);
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<float> m_, v_;
};

}  // namespace fas::nn
