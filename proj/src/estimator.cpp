#include "fas/estimator.hpp"

namespace fas {

std::pair<VecXd, VecXd> tweedie_decompose(const VecXd& z, const VecXd& v, double t) {
  if (z.size() != v.size()) throw std::invalid_argument("tweedie_decompose: length mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("tweedie_decompose: t outside [0,1]");
  return {z - t * v, z + (1.0 - t) * v};
}

McLossGrad mc_loss_and_grad(const MatXcd& h_est, const MatXcd& y_pilot,
                            const SamplingPattern& pattern, const PilotCodebook& codebook) {
  if (h_est.rows() != pattern.n_ports || h_est.cols() != codebook.users() ||
      y_pilot.rows() != pattern.observed() || y_pilot.cols() != codebook.users())
    throw std::invalid_argument("mc_loss_and_grad: shape mismatch");
  const MatXcd residual = y_pilot - gather_rows(h_est, pattern.indices) * codebook.p;
  McLossGrad out;
  out.loss = 0.5 * residual.squaredNorm();
  out.grad = -scatter_rows(residual * codebook.p.adjoint(), pattern.indices, pattern.n_ports);
  return out;
}

MatXcd guided_update(const MatXcd& h_est, const MatXcd& y_pilot, const SamplingPattern& pattern,
                     const PilotCodebook& codebook, double alpha, int n_iter) {
  if (!(alpha > 0.0)) throw std::invalid_argument("guided_update: alpha must be positive");
  MatXcd h = h_est;
  for (int i = 0; i < n_iter; ++i) {
    const McLossGrad g = mc_loss_and_grad(h, y_pilot, pattern, codebook);
    const double gnorm = g.grad.norm();
    if (gnorm < 1e-12) break;
    h -= (alpha / gnorm) * g.grad;
  }
  return h;
}

namespace {

MatXcd assemble(const std::vector<VecXd>& real_cols, int n) {
  MatXcd h(n, static_cast<Eigen::Index>(real_cols.size()));
  for (std::size_t k = 0; k < real_cols.size(); ++k)
    h.col(static_cast<Eigen::Index>(k)) = real_to_complex(real_cols[k]);
  return h;
}

}  // namespace

MatXcd estimate_channels(const PilotObservation& obs, const VelocityModel& model,
                         const GuidanceConfig& cfg, EstimateDiagnostics* diag) {
  cfg.validate();
  const int n = obs.pattern.n_ports;
  const int k = static_cast<int>(obs.y.cols());
  if (model.dim() != 2 * n)
    throw std::invalid_argument("estimate_channels: model dimension does not match geometry");
  if (k < 1) throw std::invalid_argument("estimate_channels: need K >= 1");

  const double dt = 1.0 / cfg.nfe;
  std::vector<VecXd> z(static_cast<std::size_t>(k));
  for (int u = 0; u < k; ++u) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(u)));
    VecXd zu(2 * n);
    for (int i = 0; i < 2 * n; ++i) zu[i] = rng.normal();
    z[static_cast<std::size_t>(u)] = std::move(zu);
  }

  double max_dev = 0.0;
  std::vector<VecXd> h_hat(static_cast<std::size_t>(k)), z1_hat(static_cast<std::size_t>(k));

  for (int step = 0; step < cfg.nfe; ++step) {
    const double t = 1.0 - step * dt;
    const double t_next = (step + 1 == cfg.nfe) ? 0.0 : 1.0 - (step + 1) * dt;

    std::vector<double> devs(static_cast<std::size_t>(k), 0.0);
    parallel_for(static_cast<std::size_t>(k), [&](std::size_t u) {
      const VecXd v = model.velocity(z[u], t);
      auto [hh, zz] = tweedie_decompose(z[u], v, t);
      devs[u] = ((1.0 - t) * hh + t * zz - z[u]).cwiseAbs().maxCoeff();
      h_hat[u] = std::move(hh);
      z1_hat[u] = std::move(zz);
    });
    for (double d : devs) max_dev = std::max(max_dev, d);
    if (cfg.check_identities && max_dev > 1e-6)
      throw std::runtime_error("estimate_channels: Tweedie identity violated");

    MatXcd h0 = assemble(h_hat, n);
    const MatXcd guided = guided_update(h0, obs.y, obs.pattern, obs.codebook, cfg.alpha, cfg.n_iter);
    const double gamma = cfg.gamma_scale * t;
    const MatXcd combined = (1.0 - gamma) * h0 + gamma * guided;

    for (int u = 0; u < k; ++u) {
      const VecXd hg = complex_to_real(combined.col(u));
      VecXd z1 = z1_hat[static_cast<std::size_t>(u)];
      if (cfg.stochasticity) {
        const double eta = 1.0 - t_next;
        Rng noise(derive_seed(cfg.seed, 0x5000 + static_cast<std::uint64_t>(u) * 100003 +
                                            static_cast<std::uint64_t>(step)));
        const double keep = std::sqrt(std::max(0.0, 1.0 - eta));
        const double add = std::sqrt(std::max(0.0, eta));
        for (Eigen::Index i = 0; i < z1.size(); ++i)
          z1[i] = keep * z1[i] + add * noise.normal();
      }
      z[static_cast<std::size_t>(u)] = (1.0 - t_next) * hg + t_next * z1;
    }
  }

  MatXcd estimate = assemble(z, n);
  if (diag != nullptr) {
    diag->max_tweedie_dev = max_dev;
    diag->final_residual =
        (obs.y - gather_rows(estimate, obs.pattern.indices) * obs.codebook.p).norm();
    diag->steps = cfg.nfe;
  }
  return estimate;
}

}  // namespace fas
