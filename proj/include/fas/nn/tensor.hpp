// Minimal NCHW float tensor for the convolutional backbones.
#pragma once

#include <cstddef>
#include <vector>

namespace fas::nn {

struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) { resize(n_, c_, h_, w_); }

  void resize(int n_, int c_, int h_, int w_) {
    n = n_;
    c = c_;
    h = h_;
    w = w_;
    v.assign(static_cast<std::size_t>(n) * c * h * w, 0.0f);
  }

  std::size_t size() const { return v.size(); }
  int plane_size() const { return h * w; }

  float* sample(int ni) { return v.data() + static_cast<std::size_t>(ni) * c * h * w; }
  const float* sample(int ni) const { return v.data() + static_cast<std::size_t>(ni) * c * h * w; }
  float* plane(int ni, int ci) { return sample(ni) + static_cast<std::size_t>(ci) * h * w; }
  const float* plane(int ni, int ci) const { return sample(ni) + static_cast<std::size_t>(ci) * h * w; }

  void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

}  // namespace fas::nn
