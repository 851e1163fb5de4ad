#include "fas/nn/unet.hpp"

namespace fas::nn {

namespace {

void silu_tensor(const Tensor& x, Tensor& y) {
  y.resize(x.n, x.c, x.h, x.w);
  silu_forward(x.v.data(), y.v.data(), x.size());
}

void add_channel_bias(Tensor& x, const MatF& bias) {
  // bias: (c x n)
  const int hw = x.plane_size();
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci) {
      float* p = x.plane(ni, ci);
      const float b = bias(ci, ni);
      for (int i = 0; i < hw; ++i) p[i] += b;
    }
}

void reduce_channel_bias(const Tensor& dy, MatF& dbias) {
  dbias.resize(dy.c, dy.n);
  const int hw = dy.plane_size();
  for (int ni = 0; ni < dy.n; ++ni)
    for (int ci = 0; ci < dy.c; ++ci) {
      const float* p = dy.plane(ni, ci);
      double s = 0.0;
      for (int i = 0; i < hw; ++i) s += p[i];
      dbias(ci, ni) = static_cast<float>(s);
    }
}

void silu_mat(const MatF& x, MatF& y) {
  y.resize(x.rows(), x.cols());
  silu_forward(x.data(), y.data(), static_cast<std::size_t>(x.size()));
}

void silu_mat_backward(const MatF& x, const MatF& dy, MatF& dx) {
  dx.resize(x.rows(), x.cols());
  silu_backward(x.data(), dy.data(), dx.data(), static_cast<std::size_t>(x.size()));
}

}  // namespace

void ResBlock::build(ArenaBuilder& arena, const std::string& name, int in_c_, int out_c_,
                     int h, int w, int emb_dim) {
  in_c = in_c_;
  out_c = out_c_;
  gn1.build(arena, name + ".gn1", in_c, h * w);
  conv1.build(arena, name + ".conv1", in_c, out_c, h, w, 3, 1, 1);
  emb.build(arena, name + ".emb", emb_dim, out_c);
  gn2.build(arena, name + ".gn2", out_c, h * w);
  conv2.build(arena, name + ".conv2", out_c, out_c, h, w, 3, 1, 1);
  has_skip = in_c != out_c;
  if (has_skip) skip.build(arena, name + ".skip", in_c, out_c, h, w, 1, 1, 0);
}

void ResBlock::init(float* params, Rng& rng) const {
  gn1.init(params);
  conv1.init(params, rng);
  emb.init(params, rng);
  gn2.init(params);
  conv2.init(params, rng);
  if (has_skip) skip.init(params, rng);
}

void ResBlock::forward(const float* params, const Tensor& x, const MatF& temb_silu,
                       Cache& cache, Tensor& y) const {
  gn1.forward(params, x, cache.a, cache.s1);
  silu_tensor(cache.a, cache.b);
  conv1.forward(params, cache.b, cache.c);
  MatF bias;
  emb.forward(params, temb_silu, bias);
  add_channel_bias(cache.c, bias);
  gn2.forward(params, cache.c, cache.d, cache.s2);
  silu_tensor(cache.d, cache.f);
  conv2.forward(params, cache.f, y);
  if (has_skip) {
    Tensor s;
    skip.forward(params, x, s);
    for (std::size_t i = 0; i < y.size(); ++i) y.v[i] += s.v[i];
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) y.v[i] += x.v[i];
  }
}

void ResBlock::backward(const float* params, const Tensor& x, const MatF& temb_silu,
                        const Cache& cache, const Tensor& dy, Tensor& dx, MatF& dtemb_silu,
                        float* grads) const {
  Tensor df, dd, dc, db_, da;
  conv2.backward(params, cache.f, dy, &df, grads);
  dd.resize(df.n, df.c, df.h, df.w);
  silu_backward(cache.d.v.data(), df.v.data(), dd.v.data(), dd.size());
  gn2.backward(params, cache.c, cache.s2, dd, dc, grads);

  MatF dbias, dtemb_part;
  reduce_channel_bias(dc, dbias);
  emb.backward(params, temb_silu, dbias, &dtemb_part, grads);
  dtemb_silu += dtemb_part;

  conv1.backward(params, cache.b, dc, &db_, grads);
  da.resize(db_.n, db_.c, db_.h, db_.w);
  silu_backward(cache.a.v.data(), db_.v.data(), da.v.data(), da.size());
  gn1.backward(params, x, cache.s1, da, dx, grads);

  if (has_skip) {
    Tensor dskip;
    skip.backward(params, x, dy, &dskip, grads);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] += dskip.v[i];
  } else {
    for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] += dy.v[i];
  }
}

UNet::UNet(const UNetConfig& cfg) : cfg_(cfg) {
  if (cfg.grid_nx < 4 || cfg.grid_ny < 4)
    throw std::invalid_argument("UNet: grid must be at least 4x4 for three levels");
  if (cfg.emb_dim % 2 != 0) throw std::invalid_argument("UNet: emb_dim must be even");
  h1_ = cfg.grid_ny;
  w1_ = cfg.grid_nx;
  h2_ = (h1_ + 1) / 2;
  w2_ = (w1_ + 1) / 2;
  h3_ = (h2_ + 1) / 2;
  w3_ = (w2_ + 1) / 2;
  const auto [c1, c2, c3] = std::tuple{cfg.widths[0], cfg.widths[1], cfg.widths[2]};

  lin1_.build(arena_, "time.lin1", cfg.emb_dim, cfg.emb_dim);
  lin2_.build(arena_, "time.lin2", cfg.emb_dim, cfg.emb_dim);
  conv_in_.build(arena_, "conv_in", cfg.in_ch, c1, h1_, w1_, 3, 1, 1);
  rb1_.build(arena_, "enc1", c1, c1, h1_, w1_, cfg.emb_dim);
  down1_.build(arena_, "down1", c1, c2, h1_, w1_, 3, 2, 1);
  rb2_.build(arena_, "enc2", c2, c2, h2_, w2_, cfg.emb_dim);
  down2_.build(arena_, "down2", c2, c3, h2_, w2_, 3, 2, 1);
  rb3_.build(arena_, "mid1", c3, c3, h3_, w3_, cfg.emb_dim);
  rb4_.build(arena_, "mid2", c3, c3, h3_, w3_, cfg.emb_dim);
  up2conv_.build(arena_, "up2conv", c3, c2, h2_, w2_, 3, 1, 1);
  rb5_.build(arena_, "dec2", 2 * c2, c2, h2_, w2_, cfg.emb_dim);
  up1conv_.build(arena_, "up1conv", c2, c1, h1_, w1_, 3, 1, 1);
  rb6_.build(arena_, "dec1", 2 * c1, c1, h1_, w1_, cfg.emb_dim);
  gn_out_.build(arena_, "gn_out", c1, h1_ * w1_);
  conv_out_.build(arena_, "conv_out", c1, cfg.out_ch, h1_, w1_, 3, 1, 1);

  params_.assign(arena_.total, 0.0f);
}

void UNet::init_params(std::uint64_t seed) {
  Rng rng(seed);
  float* p = params_.data();
  lin1_.init(p, rng);
  lin2_.init(p, rng);
  conv_in_.init(p, rng);
  rb1_.init(p, rng);
  down1_.init(p, rng);
  rb2_.init(p, rng);
  down2_.init(p, rng);
  rb3_.init(p, rng);
  rb4_.init(p, rng);
  up2conv_.init(p, rng);
  rb5_.init(p, rng);
  up1conv_.init(p, rng);
  rb6_.init(p, rng);
  gn_out_.init(p);
  conv_out_.init(p, rng);
  // Zero final projection: the network starts as the zero map.
  std::fill(p + conv_out_.w_off,
            p + conv_out_.w_off + static_cast<std::size_t>(conv_out_.out_c) * conv_out_.in_c * 9,
            0.0f);
}

void UNet::forward(const Tensor& x, const std::vector<double>& t, Cache& cache,
                   Tensor& out) const {
  if (x.c != cfg_.in_ch || x.h != h1_ || x.w != w1_)
    throw std::invalid_argument("UNet::forward: input shape mismatch");
  if (static_cast<int>(t.size()) != x.n)
    throw std::invalid_argument("UNet::forward: one time scalar per sample required");
  const float* p = params_.data();

  std::vector<double> ts(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) ts[i] = t[i] * cfg_.t_scale;
  sinusoidal_embedding(ts, cfg_.emb_dim, cache.temb0);
  lin1_.forward(p, cache.temb0, cache.u);
  silu_mat(cache.u, cache.us);
  lin2_.forward(p, cache.us, cache.vv);
  silu_mat(cache.vv, cache.temb_silu);

  cache.x = x;
  conv_in_.forward(p, cache.x, cache.x0);
  rb1_.forward(p, cache.x0, cache.temb_silu, cache.rb1, cache.e1);
  down1_.forward(p, cache.e1, cache.d1);
  rb2_.forward(p, cache.d1, cache.temb_silu, cache.rb2, cache.e2);
  down2_.forward(p, cache.e2, cache.d2);
  rb3_.forward(p, cache.d2, cache.temb_silu, cache.rb3, cache.m1);
  rb4_.forward(p, cache.m1, cache.temb_silu, cache.rb4, cache.m2);

  upsample_nearest_forward(cache.m2, cache.uu2, h2_, w2_);
  up2conv_.forward(p, cache.uu2, cache.uc2);
  concat_channels(cache.e2, cache.uc2, cache.cat2);
  rb5_.forward(p, cache.cat2, cache.temb_silu, cache.rb5, cache.r5);

  upsample_nearest_forward(cache.r5, cache.uu1, h1_, w1_);
  up1conv_.forward(p, cache.uu1, cache.uc1);
  concat_channels(cache.e1, cache.uc1, cache.cat1);
  rb6_.forward(p, cache.cat1, cache.temb_silu, cache.rb6, cache.r6);

  gn_out_.forward(p, cache.r6, cache.o1, cache.so);
  silu_tensor(cache.o1, cache.o2);
  conv_out_.forward(p, cache.o2, out);
}

void UNet::backward(const Cache& cache, const Tensor& dout, float* grads) const {
  const float* p = params_.data();
  MatF dtemb_silu = MatF::Zero(cfg_.emb_dim, dout.n);

  Tensor do2, do1, dr6, dcat1, de1a, duc1, duu1, dr5, dcat2, de2a, duc2, duu2;
  Tensor dm2, dm1, dd2, de2b, dd1, de1b, dx0;

  conv_out_.backward(p, cache.o2, dout, &do2, grads);
  do1.resize(do2.n, do2.c, do2.h, do2.w);
  silu_backward(cache.o1.v.data(), do2.v.data(), do1.v.data(), do1.size());
  gn_out_.backward(p, cache.r6, cache.so, do1, dr6, grads);

  rb6_.backward(p, cache.cat1, cache.temb_silu, cache.rb6, dr6, dcat1, dtemb_silu, grads);
  de1a.resize(dcat1.n, cfg_.widths[0], h1_, w1_);
  duc1.resize(dcat1.n, cfg_.widths[0], h1_, w1_);
  split_channels(dcat1, de1a, duc1);
  up1conv_.backward(p, cache.uu1, duc1, &duu1, grads);
  dr5.resize(duu1.n, duu1.c, h2_, w2_);
  upsample_nearest_backward(duu1, dr5);

  rb5_.backward(p, cache.cat2, cache.temb_silu, cache.rb5, dr5, dcat2, dtemb_silu, grads);
  de2a.resize(dcat2.n, cfg_.widths[1], h2_, w2_);
  duc2.resize(dcat2.n, cfg_.widths[1], h2_, w2_);
  split_channels(dcat2, de2a, duc2);
  up2conv_.backward(p, cache.uu2, duc2, &duu2, grads);
  dm2.resize(duu2.n, duu2.c, h3_, w3_);
  upsample_nearest_backward(duu2, dm2);

  rb4_.backward(p, cache.m1, cache.temb_silu, cache.rb4, dm2, dm1, dtemb_silu, grads);
  rb3_.backward(p, cache.d2, cache.temb_silu, cache.rb3, dm1, dd2, dtemb_silu, grads);
  down2_.backward(p, cache.e2, dd2, &de2b, grads);
  for (std::size_t i = 0; i < de2a.size(); ++i) de2a.v[i] += de2b.v[i];
  rb2_.backward(p, cache.d1, cache.temb_silu, cache.rb2, de2a, dd1, dtemb_silu, grads);
  down1_.backward(p, cache.e1, dd1, &de1b, grads);
  for (std::size_t i = 0; i < de1a.size(); ++i) de1a.v[i] += de1b.v[i];
  rb1_.backward(p, cache.x0, cache.temb_silu, cache.rb1, de1a, dx0, dtemb_silu, grads);
  conv_in_.backward(p, cache.x, dx0, nullptr, grads);

  MatF dvv, dus, du;
  silu_mat_backward(cache.vv, dtemb_silu, dvv);
  lin2_.backward(p, cache.us, dvv, &dus, grads);
  silu_mat_backward(cache.u, dus, du);
  lin1_.backward(p, cache.temb0, du, nullptr, grads);
}

VecXd UNet::apply(const VecXd& input, double t) const {
  const int n = h1_ * w1_;
  if (input.size() != static_cast<Eigen::Index>(cfg_.in_ch) * n)
    throw std::invalid_argument("UNet::apply: input length mismatch");
  Tensor x(1, cfg_.in_ch, h1_, w1_);
  for (Eigen::Index i = 0; i < input.size(); ++i) x.v[static_cast<std::size_t>(i)] = static_cast<float>(input[i]);
  Cache cache;
  Tensor out;
  forward(x, {t}, cache, out);
  VecXd result(static_cast<Eigen::Index>(cfg_.out_ch) * n);
  for (Eigen::Index i = 0; i < result.size(); ++i) result[i] = out.v[static_cast<std::size_t>(i)];
  return result;
}

}  // namespace fas::nn
