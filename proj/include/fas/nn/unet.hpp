// Symmetric convolutional encoder-decoder with three resolution levels,
// residual blocks, skip connections, and a sinusoidal time embedding injected
// into every residual block. Shared backbone of the velocity network and the
// conditional mask denoiser.
#pragma once

#include <array>

#include "fas/nn/layers.hpp"

namespace fas::nn {

struct UNetConfig {
  int in_ch = 2;
  int out_ch = 2;
  int grid_nx = 0;  // tensor width
  int grid_ny = 0;  // tensor height
  std::array<int, 3> widths = {32, 64, 128};
  int emb_dim = 128;
  double t_scale = 1000.0;  // multiplier applied to t before embedding

  bool operator==(const UNetConfig& o) const = default;
};

struct ResBlock {
  int in_c = 0, out_c = 0;
  GroupNorm gn1, gn2;
  Conv2d conv1, conv2, skip;
  Linear emb;
  bool has_skip = false;

  struct Cache {
    Tensor a, b, c, d, f;
    std::vector<float> s1, s2;
  };

  void build(ArenaBuilder& arena, const std::string& name, int in_c_, int out_c_, int h,
             int w, int emb_dim);
  void init(float* params, Rng& rng) const;
  void forward(const float* params, const Tensor& x, const MatF& temb_silu, Cache& cache,
               Tensor& y) const;
  void backward(const float* params, const Tensor& x, const MatF& temb_silu,
                const Cache& cache, const Tensor& dy, Tensor& dx, MatF& dtemb_silu,
                float* grads) const;
};

class UNet {
 public:
  explicit UNet(const UNetConfig& cfg);

  const UNetConfig& config() const { return cfg_; }
  std::size_t param_count() const { return arena_.total; }
  const std::vector<ArenaBuilder::Entry>& param_layout() const { return arena_.entries; }
  float* params() { return params_.data(); }
  const float* params() const { return params_.data(); }

  void init_params(std::uint64_t seed);

  struct Cache {
    Tensor x;  // input copy
    MatF temb0, u, us, vv, temb_silu;
    Tensor x0, e1, d1, e2, d2, m1, m2;
    Tensor uu2, uc2, cat2, r5, uu1, uc1, cat1, r6, o1, o2;
    ResBlock::Cache rb1, rb2, rb3, rb4, rb5, rb6;
    std::vector<float> so;
  };

  // t holds one time scalar per batch sample (pre t_scale).
  void forward(const Tensor& x, const std::vector<double>& t, Cache& cache, Tensor& out) const;
  // Accumulates parameter gradients into `grads` (size param_count()).
  void backward(const Cache& cache, const Tensor& dout, float* grads) const;

  // Single-sample convenience: input length in_ch*N, output length out_ch*N.
  VecXd apply(const VecXd& input, double t) const;

 private:
  UNetConfig cfg_;
  ArenaBuilder arena_;
  std::vector<float> params_;

  Linear lin1_, lin2_;
  Conv2d conv_in_, down1_, down2_, up2conv_, up1conv_, conv_out_;
  ResBlock rb1_, rb2_, rb3_, rb4_, rb5_, rb6_;
  GroupNorm gn_out_;
  int h1_ = 0, w1_ = 0, h2_ = 0, w2_ = 0, h3_ = 0, w3_ = 0;
};

}  // namespace fas::nn
