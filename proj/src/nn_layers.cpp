#include "fas/nn/layers.hpp"

namespace fas::nn {

namespace {

using RowMajorMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void im2col(const float* x, int c, int in_h, int in_w, int k, int stride, int pad,
            int out_h, int out_w, float* col) {
  const int out_hw = out_h * out_w;
  std::size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    const float* xc = x + static_cast<std::size_t>(ci) * in_h * in_w;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++row) {
        float* dst = col + row * out_hw;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in_h) {
            std::fill(dst + oy * out_w, dst + (oy + 1) * out_w, 0.0f);
            continue;
          }
          const float* src = xc + static_cast<std::size_t>(iy) * in_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[oy * out_w + ox] = (ix >= 0 && ix < in_w) ? src[ix] : 0.0f;
          }
        }
      }
  }
}

void col2im_accum(const float* col, int c, int in_h, int in_w, int k, int stride, int pad,
                  int out_h, int out_w, float* x) {
  const int out_hw = out_h * out_w;
  std::size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    float* xc = x + static_cast<std::size_t>(ci) * in_h * in_w;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++row) {
        const float* src = col + row * out_hw;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in_h) continue;
          float* dst = xc + static_cast<std::size_t>(iy) * in_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < in_w) dst[ix] += src[oy * out_w + ox];
          }
        }
      }
  }
}

}  // namespace

void Conv2d::build(ArenaBuilder& arena, const std::string& name, int in_c_, int out_c_,
                   int in_h_, int in_w_, int k_, int stride_, int pad_) {
  in_c = in_c_;
  out_c = out_c_;
  in_h = in_h_;
  in_w = in_w_;
  k = k_;
  stride = stride_;
  pad = pad_;
  out_h = (in_h + 2 * pad - k) / stride + 1;
  out_w = (in_w + 2 * pad - k) / stride + 1;
  w_off = arena.add(name + ".weight", static_cast<std::size_t>(out_c) * in_c * k * k);
  b_off = arena.add(name + ".bias", static_cast<std::size_t>(out_c));
}

void Conv2d::init(float* params, Rng& rng) const {
  const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
  float* w = params + w_off;
  const std::size_t wn = static_cast<std::size_t>(out_c) * in_c * k * k;
  for (std::size_t i = 0; i < wn; ++i) w[i] = static_cast<float>(rng.normal() * std_dev);
  std::fill(params + b_off, params + b_off + out_c, 0.0f);
}

void Conv2d::forward(const float* params, const Tensor& x, Tensor& y) const {
  y.resize(x.n, out_c, out_h, out_w);
  const int rows = in_c * k * k;
  const int out_hw = out_h * out_w;
  ConstRowMajorMap wmat(params + w_off, out_c, rows);
  Eigen::Map<const Eigen::VectorXf> bias(params + b_off, out_c);
  std::vector<float> col(static_cast<std::size_t>(rows) * out_hw);
  for (int ni = 0; ni < x.n; ++ni) {
    im2col(x.sample(ni), in_c, in_h, in_w, k, stride, pad, out_h, out_w, col.data());
    Eigen::Map<const MatF> colmat(col.data(), out_hw, rows);  // transposed view
    RowMajorMap ymat(y.sample(ni), out_c, out_hw);
    ymat.noalias() = wmat * colmat.transpose();
    ymat.colwise() += bias;
  }
}

void Conv2d::backward(const float* params, const Tensor& x, const Tensor& dy, Tensor* dx,
                      float* grads) const {
  const int rows = in_c * k * k;
  const int out_hw = out_h * out_w;
  ConstRowMajorMap wmat(params + w_off, out_c, rows);
  RowMajorMap dwmat(grads + w_off, out_c, rows);
  Eigen::Map<Eigen::VectorXf> dbias(grads + b_off, out_c);
  if (dx != nullptr) {
    dx->resize(x.n, in_c, in_h, in_w);
    dx->zero();
  }
  std::vector<float> col(static_cast<std::size_t>(rows) * out_hw);
  std::vector<float> dcol(static_cast<std::size_t>(rows) * out_hw);
  for (int ni = 0; ni < x.n; ++ni) {
    im2col(x.sample(ni), in_c, in_h, in_w, k, stride, pad, out_h, out_w, col.data());
    Eigen::Map<const MatF> colmat(col.data(), out_hw, rows);
    ConstRowMajorMap dymat(dy.sample(ni), out_c, out_hw);
    dwmat.noalias() += dymat * colmat;
    dbias.noalias() += dymat.rowwise().sum();
    if (dx != nullptr) {
      Eigen::Map<MatF> dcolmat(dcol.data(), out_hw, rows);
      dcolmat.noalias() = dymat.transpose() * wmat;
      col2im_accum(dcol.data(), in_c, in_h, in_w, k, stride, pad, out_h, out_w, dx->sample(ni));
    }
  }
}

void GroupNorm::build(ArenaBuilder& arena, const std::string& name, int c_, int hw_) {
  c = c_;
  hw = hw_;
  groups = std::min(8, c);
  while (c % groups != 0) --groups;
  g_off = arena.add(name + ".gamma", static_cast<std::size_t>(c));
  b_off = arena.add(name + ".beta", static_cast<std::size_t>(c));
}

void GroupNorm::init(float* params) const {
  std::fill(params + g_off, params + g_off + c, 1.0f);
  std::fill(params + b_off, params + b_off + c, 0.0f);
}

void GroupNorm::forward(const float* params, const Tensor& x, Tensor& y,
                        std::vector<float>& stats) const {
  y.resize(x.n, x.c, x.h, x.w);
  const int cpg = c / groups;
  const std::size_t m = static_cast<std::size_t>(cpg) * hw;
  stats.assign(static_cast<std::size_t>(x.n) * groups * 2, 0.0f);
  const float* gamma = params + g_off;
  const float* beta = params + b_off;
  for (int ni = 0; ni < x.n; ++ni)
    for (int g = 0; g < groups; ++g) {
      const float* xg = x.plane(ni, g * cpg);
      double sum = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        sum += xg[i];
        sq += static_cast<double>(xg[i]) * xg[i];
      }
      const float mean = static_cast<float>(sum / static_cast<double>(m));
      const float var = static_cast<float>(sq / static_cast<double>(m)) - mean * mean;
      const float inv = 1.0f / std::sqrt(var + kEps);
      stats[(static_cast<std::size_t>(ni) * groups + g) * 2] = mean;
      stats[(static_cast<std::size_t>(ni) * groups + g) * 2 + 1] = inv;
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = g * cpg + cc;
        const float* xi = x.plane(ni, ch);
        float* yi = y.plane(ni, ch);
        const float a = gamma[ch] * inv;
        const float b = beta[ch] - a * mean;
        for (int i = 0; i < hw; ++i) yi[i] = a * xi[i] + b;
      }
    }
}

void GroupNorm::backward(const float* params, const Tensor& x, const std::vector<float>& stats,
                         const Tensor& dy, Tensor& dx, float* grads) const {
  dx.resize(x.n, x.c, x.h, x.w);
  const int cpg = c / groups;
  const double m = static_cast<double>(cpg) * hw;
  const float* gamma = params + g_off;
  float* dgamma = grads + g_off;
  float* dbeta = grads + b_off;
  for (int ni = 0; ni < x.n; ++ni)
    for (int g = 0; g < groups; ++g) {
      const float mean = stats[(static_cast<std::size_t>(ni) * groups + g) * 2];
      const float inv = stats[(static_cast<std::size_t>(ni) * groups + g) * 2 + 1];
      // First pass: parameter grads and the two group-level reductions.
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = g * cpg + cc;
        const float* xi = x.plane(ni, ch);
        const float* dyi = dy.plane(ni, ch);
        double dg = 0.0, db = 0.0, s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < hw; ++i) {
          const float xhat = (xi[i] - mean) * inv;
          dg += static_cast<double>(dyi[i]) * xhat;
          db += dyi[i];
          const float dxhat = dyi[i] * gamma[ch];
          s1 += dxhat;
          s2 += static_cast<double>(dxhat) * xhat;
        }
        dgamma[ch] += static_cast<float>(dg);
        dbeta[ch] += static_cast<float>(db);
        sum_dxhat += s1;
        sum_dxhat_xhat += s2;
      }
      const float mean_dxhat = static_cast<float>(sum_dxhat / m);
      const float mean_dxhat_xhat = static_cast<float>(sum_dxhat_xhat / m);
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = g * cpg + cc;
        const float* xi = x.plane(ni, ch);
        const float* dyi = dy.plane(ni, ch);
        float* dxi = dx.plane(ni, ch);
        for (int i = 0; i < hw; ++i) {
          const float xhat = (xi[i] - mean) * inv;
          const float dxhat = dyi[i] * gamma[ch];
          dxi[i] = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
        }
      }
    }
}

void Linear::build(ArenaBuilder& arena, const std::string& name, int in_d_, int out_d_) {
  in_d = in_d_;
  out_d = out_d_;
  w_off = arena.add(name + ".weight", static_cast<std::size_t>(out_d) * in_d);
  b_off = arena.add(name + ".bias", static_cast<std::size_t>(out_d));
}

void Linear::init(float* params, Rng& rng, bool zero_bias) const {
  const double std_dev = std::sqrt(1.0 / static_cast<double>(in_d));
  float* w = params + w_off;
  for (std::size_t i = 0; i < static_cast<std::size_t>(out_d) * in_d; ++i)
    w[i] = static_cast<float>(rng.normal() * std_dev);
  if (zero_bias) std::fill(params + b_off, params + b_off + out_d, 0.0f);
}

void Linear::zero_init(float* params) const {
  std::fill(params + w_off, params + w_off + static_cast<std::size_t>(out_d) * in_d, 0.0f);
  std::fill(params + b_off, params + b_off + out_d, 0.0f);
}

void Linear::forward(const float* params, const MatF& x, MatF& y) const {
  ConstRowMajorMap wmat(params + w_off, out_d, in_d);
  Eigen::Map<const Eigen::VectorXf> bias(params + b_off, out_d);
  y.resize(out_d, x.cols());
  y.noalias() = wmat * x;
  y.colwise() += bias;
}

void Linear::backward(const float* params, const MatF& x, const MatF& dy, MatF* dx,
                      float* grads) const {
  ConstRowMajorMap wmat(params + w_off, out_d, in_d);
  RowMajorMap dwmat(grads + w_off, out_d, in_d);
  Eigen::Map<Eigen::VectorXf> dbias(grads + b_off, out_d);
  dwmat.noalias() += dy * x.transpose();
  dbias.noalias() += dy.rowwise().sum();
  if (dx != nullptr) {
    dx->resize(in_d, x.cols());
    dx->noalias() = wmat.transpose() * dy;
  }
}

void silu_forward(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float s = 1.0f / (1.0f + std::exp(-x[i]));
    y[i] = x[i] * s;
  }
}

void silu_backward(const float* x, const float* dy, float* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float s = 1.0f / (1.0f + std::exp(-x[i]));
    dx[i] = dy[i] * s * (1.0f + x[i] * (1.0f - s));
  }
}

void upsample_nearest_forward(const Tensor& x, Tensor& y, int out_h, int out_w) {
  y.resize(x.n, x.c, out_h, out_w);
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci) {
      const float* src = x.plane(ni, ci);
      float* dst = y.plane(ni, ci);
      for (int oy = 0; oy < out_h; ++oy) {
        const int iy = oy * x.h / out_h;
        for (int ox = 0; ox < out_w; ++ox) dst[oy * out_w + ox] = src[iy * x.w + ox * x.w / out_w];
      }
    }
}

void upsample_nearest_backward(const Tensor& dy, Tensor& dx) {
  // dx must be pre-sized to the input shape; accumulates.
  dx.zero();
  for (int ni = 0; ni < dy.n; ++ni)
    for (int ci = 0; ci < dy.c; ++ci) {
      const float* src = dy.plane(ni, ci);
      float* dst = dx.plane(ni, ci);
      for (int oy = 0; oy < dy.h; ++oy) {
        const int iy = oy * dx.h / dy.h;
        for (int ox = 0; ox < dy.w; ++ox) dst[iy * dx.w + ox * dx.w / dy.w] += src[oy * dy.w + ox];
      }
    }
}

void concat_channels(const Tensor& a, const Tensor& b, Tensor& y) {
  y.resize(a.n, a.c + b.c, a.h, a.w);
  const std::size_t pa = static_cast<std::size_t>(a.c) * a.h * a.w;
  const std::size_t pb = static_cast<std::size_t>(b.c) * b.h * b.w;
  for (int ni = 0; ni < a.n; ++ni) {
    std::copy(a.sample(ni), a.sample(ni) + pa, y.sample(ni));
    std::copy(b.sample(ni), b.sample(ni) + pb, y.sample(ni) + pa);
  }
}

void split_channels(const Tensor& dy, Tensor& da, Tensor& db) {
  // da, db pre-sized with channel counts summing to dy.c.
  const std::size_t pa = static_cast<std::size_t>(da.c) * da.h * da.w;
  const std::size_t pb = static_cast<std::size_t>(db.c) * db.h * db.w;
  for (int ni = 0; ni < dy.n; ++ni) {
    std::copy(dy.sample(ni), dy.sample(ni) + pa, da.sample(ni));
    std::copy(dy.sample(ni) + pa, dy.sample(ni) + pa + pb, db.sample(ni));
  }
}

void sinusoidal_embedding(const std::vector<double>& t, int dim, MatF& out) {
  const int half = dim / 2;
  out.resize(dim, static_cast<Eigen::Index>(t.size()));
  for (std::size_t s = 0; s < t.size(); ++s)
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
      const double arg = t[s] * freq;
      out(i, static_cast<Eigen::Index>(s)) = static_cast<float>(std::sin(arg));
      out(half + i, static_cast<Eigen::Index>(s)) = static_cast<float>(std::cos(arg));
    }
}

}  // namespace fas::nn
