#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fas/estimator.hpp"

using namespace fas;

namespace {

VecXd random_vec(int n, Rng& rng) {
  VecXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

MatXcd random_cmat(int r, int c, Rng& rng) {
  MatXcd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.normal_complex();
  return m;
}

struct GaussianVelocity : VelocityModel {
  VecXd var;
  explicit GaussianVelocity(VecXd v) : var(std::move(v)) {}
  VecXd velocity(const VecXd& z, double t) const override {
    VecXd out(z.size());
    for (int i = 0; i < z.size(); ++i) {
      const double s2 = var[i];
      out[i] = (t - (1.0 - t) * s2) / ((1.0 - t) * (1.0 - t) * s2 + t * t) * z[i];
    }
    return out;
  }
  int dim() const override { return static_cast<int>(var.size()); }
};

double mc_loss_only(const MatXcd& h, const MatXcd& y, const SamplingPattern& pat,
                    const PilotCodebook& cb) {
  return mc_loss_and_grad(h, y, pat, cb).loss;
}

}  // namespace

TEST_CASE("tweedie boundaries and exact reconstruction") {
  Rng rng(3);
  const VecXd z = random_vec(12, rng), v = random_vec(12, rng);
  {
    auto [h, z1] = tweedie_decompose(z, v, 0.0);
    CHECK((h - z).norm() == 0.0);
  }
  {
    auto [h, z1] = tweedie_decompose(z, v, 1.0);
    CHECK((z1 - z).norm() == 0.0);
  }
  for (double t : {0.1, 0.5, 0.93}) {
    auto [h, z1] = tweedie_decompose(z, v, t);
    CHECK(((1.0 - t) * h + t * z1 - z).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("measurement-consistency loss and gradient, scalar case") {
  const Geometry g{2, 2, 0.5, 0.5};
  SamplingPattern pat;
  pat.n_ports = 1;
  pat.indices = {0};
  pat.delta = 1.0;
  PilotCodebook cb{MatXcd::Identity(1, 1)};
  MatXcd h(1, 1), y(1, 1);
  h << Cplx(1, 0);
  y << Cplx(3, 0);
  const auto out = mc_loss_and_grad(h, y, pat, cb);
  CHECK(out.loss == doctest::Approx(2.0));
  CHECK(std::abs(out.grad(0, 0) - Cplx(-2, 0)) < 1e-14);
}

TEST_CASE("zero residual gives zero loss and gradient") {
  Rng rng(5);
  const Geometry g{3, 2, 0.5, 0.5};
  const auto pat = build_sampling_pattern(g, 4, SamplingStrategy::kRandom, 1);
  const auto cb = build_pilot_codebook(2);
  const MatXcd h = random_cmat(6, 2, rng);
  const MatXcd y = gather_rows(h, pat.indices) * cb.p;
  const auto out = mc_loss_and_grad(h, y, pat, cb);
  CHECK(out.loss < 1e-24);
  CHECK(out.grad.norm() < 1e-13);
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(7);
  const Geometry g{3, 3, 0.5, 0.5};
  const auto pat = build_sampling_pattern(g, 5, SamplingStrategy::kRandom, 2);
  const auto cb = build_pilot_codebook(2);
  for (int inst = 0; inst < 5; ++inst) {
    const MatXcd h = random_cmat(9, 2, rng);
    const MatXcd y = random_cmat(5, 2, rng);
    const auto out = mc_loss_and_grad(h, y, pat, cb);
    const double eps = 1e-6;
    double worst = 0.0;
    for (int r = 0; r < 9; ++r)
      for (int c = 0; c < 2; ++c) {
        MatXcd hp = h, hm = h;
        hp(r, c) += eps;
        hm(r, c) -= eps;
        const double fd_re = (mc_loss_only(hp, y, pat, cb) - mc_loss_only(hm, y, pat, cb)) / (2 * eps);
        hp = h;
        hm = h;
        hp(r, c) += Cplx(0, eps);
        hm(r, c) -= Cplx(0, eps);
        const double fd_im = (mc_loss_only(hp, y, pat, cb) - mc_loss_only(hm, y, pat, cb)) / (2 * eps);
        const Cplx fd(fd_re, fd_im);
        worst = std::max(worst, std::abs(fd - out.grad(r, c)) / std::max(1.0, std::abs(fd)));
      }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("guided update: skip rule and exact step size") {
  Rng rng(9);
  const Geometry g{2, 3, 0.5, 0.5};
  const auto pat = build_sampling_pattern(g, 3, SamplingStrategy::kRandom, 3);
  const auto cb = build_pilot_codebook(2);
  const MatXcd h = random_cmat(6, 2, rng);

  // Zero gradient at start: output equals input.
  const MatXcd consistent_y = gather_rows(h, pat.indices) * cb.p;
  CHECK((guided_update(h, consistent_y, pat, cb, 0.5, 3) - h).norm() == 0.0);

  // One normalized step moves the estimate by exactly alpha.
  const MatXcd y = random_cmat(3, 2, rng);
  const double alpha = 0.37;
  const MatXcd stepped = guided_update(h, y, pat, cb, alpha, 1);
  CHECK((stepped - h).norm() == doctest::Approx(alpha).epsilon(1e-12));
}

TEST_CASE("small guided steps do not increase the loss") {
  Rng rng(11);
  const Geometry g{2, 2, 0.5, 0.5};
  SamplingPattern pat;
  pat.n_ports = 4;
  pat.indices = {0, 1, 2, 3};
  pat.delta = 1.0;
  const auto cb = build_pilot_codebook(2);
  const MatXcd h0 = random_cmat(4, 2, rng);
  const MatXcd y = random_cmat(4, 2, rng);
  const double alpha = 0.01 * h0.norm();
  MatXcd h = h0;
  double prev = mc_loss_only(h, y, pat, cb);
  for (int i = 0; i < 3; ++i) {
    h = guided_update(h, y, pat, cb, alpha, 1);
    const double cur = mc_loss_only(h, y, pat, cb);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("estimation is seed deterministic and validates geometry") {
  const int n = 16;
  VecXd var = VecXd::Ones(2 * n);
  const GaussianVelocity model(var);
  const Geometry g{4, 4, 0.75, 0.75};
  Rng rng(13);
  const MatXcd truth = random_cmat(n, 2, rng);
  const auto pat = build_sampling_pattern(g, 8, SamplingStrategy::kUniformGrid);
  const auto cb = build_pilot_codebook(2);
  const auto obs = observe_pilots(truth, pat, cb, 0.01, 5);

  GuidanceConfig cfg;
  cfg.nfe = 8;
  cfg.alpha = 0.5;
  cfg.seed = 3;
  EstimateDiagnostics d1, d2;
  const MatXcd a = estimate_channels(obs, model, cfg, &d1);
  const MatXcd b = estimate_channels(obs, model, cfg, &d2);
  CHECK((a - b).norm() == 0.0);
  CHECK(d1.max_tweedie_dev < 1e-6);
  CHECK(d1.max_tweedie_dev == d2.max_tweedie_dev);

  const GaussianVelocity wrong(VecXd::Ones(2 * n + 2));
  CHECK_THROWS(estimate_channels(obs, wrong, cfg));
}

TEST_CASE("guidance ablation reduces to unconditional sampling") {
  const int n = 16;
  VecXd var(2 * n);
  Rng vr(15);
  for (int i = 0; i < 2 * n; ++i) var[i] = 0.3 + vr.uniform();
  const GaussianVelocity model(var);
  const Geometry g{4, 4, 0.75, 0.75};
  Rng rng(17);
  const MatXcd truth = random_cmat(n, 2, rng);
  const auto pat = build_sampling_pattern(g, 8, SamplingStrategy::kUniformGrid);
  const auto cb = build_pilot_codebook(2);
  const auto obs = observe_pilots(truth, pat, cb, 0.01, 7);

  GuidanceConfig cfg;
  cfg.nfe = 12;
  cfg.alpha = 1.0;
  cfg.seed = 11;
  cfg.gamma_scale = 0.0;
  cfg.stochasticity = false;
  const MatXcd est = estimate_channels(obs, model, cfg);

  for (int k = 0; k < 2; ++k) {
    const VecXd uncond =
        sample_unconditional(model, cfg.nfe, derive_seed(cfg.seed, static_cast<std::uint64_t>(k)));
    CHECK((complex_to_real(est.col(k)) - uncond).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("guidance shrinks the measurement residual vs the unguided run") {
  const int n = 16;
  VecXd var = VecXd::Constant(2 * n, 0.5);
  const GaussianVelocity model(var);
  const Geometry g{4, 4, 0.75, 0.75};
  const auto pat = build_sampling_pattern(g, 8, SamplingStrategy::kUniformGrid);
  const auto cb = build_pilot_codebook(2);

  int wins = 0;
  const int trials = 40;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(100 + static_cast<std::uint64_t>(trial));
    const MatXcd truth = random_cmat(n, 2, rng);
    const auto obs = observe_pilots(truth, pat, cb, 0.01, 200 + static_cast<std::uint64_t>(trial));
    GuidanceConfig guided;
    guided.nfe = 12;
    guided.alpha = 0.8;
    guided.seed = 300 + static_cast<std::uint64_t>(trial);
    EstimateDiagnostics dg;
    estimate_channels(obs, model, guided, &dg);

    GuidanceConfig unguided = guided;
    unguided.gamma_scale = 0.0;
    EstimateDiagnostics du;
    estimate_channels(obs, model, unguided, &du);
    if (dg.final_residual <= du.final_residual) ++wins;
  }
  CHECK(wins >= static_cast<int>(0.95 * trials));
}
