// Network building blocks with explicit forward/backward passes. Parameters
// and gradients live in flat arenas owned by the enclosing network; each
// layer only records its offsets, so the same layer object can be driven
// concurrently with per-thread gradient buffers.
#pragma once

#include <Eigen/Dense>

#include "fas/common.hpp"
#include "fas/nn/tensor.hpp"

namespace fas::nn {

using MatF = Eigen::MatrixXf;  // column-major

// Flat parameter arena bookkeeping; registration order defines the
// checkpoint layout.
struct ArenaBuilder {
  struct Entry {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
  };
  std::vector<Entry> entries;
  std::size_t total = 0;

  std::size_t add(const std::string& name, std::size_t count) {
    entries.push_back({name, total, count});
    const std::size_t off = total;
    total += count;
    return off;
  }
};

struct Conv2d {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::size_t w_off = 0, b_off = 0;

  void build(ArenaBuilder& arena, const std::string& name, int in_c_, int out_c_,
             int in_h_, int in_w_, int k_, int stride_, int pad_);
  void init(float* params, Rng& rng) const;
  void forward(const float* params, const Tensor& x, Tensor& y) const;
  // `dx` may be null when the input gradient is not needed (first layer).
  void backward(const float* params, const Tensor& x, const Tensor& dy, Tensor* dx,
                float* grads) const;
};

struct GroupNorm {
  int c = 0, groups = 0, hw = 0;
  std::size_t g_off = 0, b_off = 0;
  static constexpr float kEps = 1e-5f;

  void build(ArenaBuilder& arena, const std::string& name, int c_, int hw_);
  void init(float* params) const;
  // Stats buffer stores (mean, invstd) per (sample, group) for backward.
  void forward(const float* params, const Tensor& x, Tensor& y, std::vector<float>& stats) const;
  void backward(const float* params, const Tensor& x, const std::vector<float>& stats,
                const Tensor& dy, Tensor& dx, float* grads) const;
};

struct Linear {
  int in_d = 0, out_d = 0;
  std::size_t w_off = 0, b_off = 0;

  void build(ArenaBuilder& arena, const std::string& name, int in_d_, int out_d_);
  void init(float* params, Rng& rng, bool zero_bias = true) const;
  void zero_init(float* params) const;
  // x: (in_d x n), y: (out_d x n)
  void forward(const float* params, const MatF& x, MatF& y) const;
  void backward(const float* params, const MatF& x, const MatF& dy, MatF* dx,
                float* grads) const;
};

void silu_forward(const float* x, float* y, std::size_t n);
void silu_backward(const float* x, const float* dy, float* dx, std::size_t n);

// Nearest-neighbour resize to an explicit target size (used to undo the
// ceil-division of strided downsampling on odd grids).
void upsample_nearest_forward(const Tensor& x, Tensor& y, int out_h, int out_w);
void upsample_nearest_backward(const Tensor& dy, Tensor& dx);

void concat_channels(const Tensor& a, const Tensor& b, Tensor& y);
void split_channels(const Tensor& dy, Tensor& da, Tensor& db);

// Sinusoidal embedding of scalars into dim-length vectors (half sin, half cos)
// with geometric frequencies from 1 down to 1/10000.
void sinusoidal_embedding(const std::vector<double>& t, int dim, MatF& out);

}  // namespace fas::nn
