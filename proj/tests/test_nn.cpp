#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "fas/nn/adam.hpp"
#include "fas/nn/checkpoint.hpp"

using namespace fas;
using namespace fas::nn;

namespace {

UNetConfig tiny_config() {
  UNetConfig cfg;
  cfg.in_ch = 2;
  cfg.out_ch = 2;
  cfg.grid_nx = 5;  // odd on purpose: exercises ceil-div down/up sampling
  cfg.grid_ny = 4;
  cfg.widths = {8, 8, 16};
  cfg.emb_dim = 16;
  cfg.t_scale = 1000.0;
  return cfg;
}

void fill_random(Tensor& x, Rng& rng) {
  for (auto& v : x.v) v = static_cast<float>(rng.normal());
}

// Scalar probe loss L = sum(out .* probe) so dL/dout = probe.
double probe_loss(const UNet& net, const Tensor& x, const std::vector<double>& t,
                  const Tensor& probe) {
  UNet::Cache cache;
  Tensor out;
  net.forward(x, t, cache, out);
  double loss = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i)
    loss += static_cast<double>(out.v[i]) * probe.v[i];
  return loss;
}

}  // namespace

TEST_CASE("zero-initialized head makes the network the zero map") {
  UNet net(tiny_config());
  net.init_params(3);
  Rng rng(5);
  Tensor x(2, 2, 4, 5);
  fill_random(x, rng);
  UNet::Cache cache;
  Tensor out;
  net.forward(x, {0.3, 0.8}, cache, out);
  for (float v : out.v) CHECK(v == 0.0f);
}

TEST_CASE("batched forward equals per-sample forward") {
  UNet net(tiny_config());
  net.init_params(7);
  // Nudge the output head so results are nonzero.
  Rng wiggle(11);
  for (std::size_t i = net.param_count() - 200; i < net.param_count(); ++i)
    net.params()[i] = static_cast<float>(wiggle.normal() * 0.05);

  Rng rng(13);
  Tensor batch(3, 2, 4, 5);
  fill_random(batch, rng);
  const std::vector<double> ts{0.1, 0.5, 0.9};
  UNet::Cache cache;
  Tensor out;
  net.forward(batch, ts, cache, out);

  for (int i = 0; i < 3; ++i) {
    Tensor single(1, 2, 4, 5);
    std::copy(batch.sample(i), batch.sample(i) + single.size(), single.v.data());
    UNet::Cache c2;
    Tensor o2;
    net.forward(single, {ts[static_cast<std::size_t>(i)]}, c2, o2);
    for (std::size_t j = 0; j < o2.size(); ++j)
      CHECK(out.sample(i)[j] == doctest::Approx(o2.v[j]).epsilon(1e-5));
  }
}

TEST_CASE("analytic gradients match finite differences") {
  UNet net(tiny_config());
  net.init_params(17);
  // Non-degenerate head.
  Rng wiggle(19);
  for (std::size_t i = net.param_count() - 200; i < net.param_count(); ++i)
    net.params()[i] = static_cast<float>(wiggle.normal() * 0.1);

  Rng rng(23);
  Tensor x(2, 2, 4, 5);
  fill_random(x, rng);
  const std::vector<double> ts{0.25, 0.75};
  Tensor probe(2, 2, 4, 5);
  fill_random(probe, rng);

  UNet::Cache cache;
  Tensor out;
  net.forward(x, ts, cache, out);
  Tensor dout = probe;
  std::vector<float> grads(net.param_count(), 0.0f);
  net.backward(cache, dout, grads.data());

  // Probe a spread of parameters across the whole arena.
  Rng pick(29);
  int checked = 0;
  double worst = 0.0;
  while (checked < 120) {
    const auto idx = static_cast<std::size_t>(pick.uniform_int(net.param_count()));
    const float saved = net.params()[idx];
    const float eps = 1e-2f;
    net.params()[idx] = saved + eps;
    const double lp = probe_loss(net, x, ts, probe);
    net.params()[idx] = saved - eps;
    const double lm = probe_loss(net, x, ts, probe);
    net.params()[idx] = saved;
    const double fd = (lp - lm) / (2.0 * eps);
    const double an = grads[idx];
    const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
    worst = std::max(worst, err);
    ++checked;
  }
  CHECK(worst < 2e-2);
}

TEST_CASE("gradients accumulate across calls") {
  UNet net(tiny_config());
  net.init_params(31);
  Rng rng(37);
  Tensor x(1, 2, 4, 5);
  fill_random(x, rng);
  Tensor probe(1, 2, 4, 5);
  fill_random(probe, rng);

  UNet::Cache cache;
  Tensor out;
  net.forward(x, {0.4}, cache, out);
  std::vector<float> g1(net.param_count(), 0.0f);
  net.backward(cache, probe, g1.data());
  std::vector<float> g2(net.param_count(), 0.0f);
  net.backward(cache, probe, g2.data());
  net.backward(cache, probe, g2.data());
  for (std::size_t i = 0; i < g1.size(); i += 997)
    CHECK(g2[i] == doctest::Approx(2.0f * g1[i]).epsilon(1e-5));
}

TEST_CASE("checkpoint round trip reproduces forward outputs exactly") {
  UNet net(tiny_config());
  net.init_params(41);
  Rng wiggle(43);
  for (std::size_t i = 0; i < net.param_count(); i += 7)
    net.params()[i] += static_cast<float>(wiggle.normal() * 0.01);

  const auto stem = std::filesystem::temp_directory_path() / "fas_test_ckpt";
  CheckpointMeta meta;
  meta.seed = 41;
  meta.epoch = 3;
  meta.extra = {{"kind", "velocity"}};
  save_checkpoint(stem, net, meta);

  CheckpointMeta back_meta;
  UNet back = load_checkpoint(stem, &back_meta);
  CHECK(back_meta.epoch == 3);
  CHECK(back.config() == net.config());

  Rng rng(47);
  Tensor x(1, 2, 4, 5);
  fill_random(x, rng);
  UNet::Cache ca, cb;
  Tensor oa, ob;
  net.forward(x, {0.6}, ca, oa);
  back.forward(x, {0.6}, cb, ob);
  for (std::size_t i = 0; i < oa.size(); ++i) CHECK(oa.v[i] == ob.v[i]);

  std::filesystem::remove(stem.string() + ".json");
  std::filesystem::remove(stem.string() + ".bin");
}

TEST_CASE("adam descends a quadratic") {
  std::vector<float> p{5.0f, -3.0f};
  Adam opt(2, 0.05);
  for (int i = 0; i < 500; ++i) {
    const float g[2] = {2.0f * p[0], 2.0f * p[1]};
    opt.step(p.data(), g);
  }
  CHECK(std::abs(p[0]) < 0.05f);
  CHECK(std::abs(p[1]) < 0.05f);
}

TEST_CASE("sinusoidal embedding is bounded and time sensitive") {
  MatF a, b;
  sinusoidal_embedding({0.2}, 16, a);
  sinusoidal_embedding({0.9}, 16, b);
  CHECK(a.cwiseAbs().maxCoeff() <= 1.0f);
  CHECK((a - b).norm() > 1e-3f);
}
