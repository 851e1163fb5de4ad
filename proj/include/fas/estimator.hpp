// Online multiuser channel estimation by measurement-guided flow sampling:
// per-user Tweedie decomposition, normalized multi-step consistency guidance
// on the assembled multiuser matrix, prior interpolation, stochasticity
// injection, and decomposed Euler updates.
#pragma once

#include "fas/flow.hpp"
#include "fas/uplink.hpp"

namespace fas {

struct GuidanceConfig {
  int nfe = 20;          // Euler steps; dt = 1/nfe
  int n_iter = 3;        // consistency gradient steps per Euler step
  double alpha = 50.0;   // normalized gradient step size, constant over t
  std::uint64_t seed = 0;
  // gamma_t = gamma_scale * t; 0 disables guidance (ablation).
  double gamma_scale = 1.0;
  // When false, the source-noise estimate is used as-is (ablation).
  bool stochasticity = true;
  // Throw if the Tweedie consistency identity drifts beyond 1e-6.
  bool check_identities = false;

  void validate() const {
    if (nfe < 1) throw std::invalid_argument("GuidanceConfig: NFE must be >= 1");
    if (n_iter < 1) throw std::invalid_argument("GuidanceConfig: N_iter must be >= 1");
    if (!(alpha > 0.0)) throw std::invalid_argument("GuidanceConfig: alpha must be positive");
  }
};

// h_hat = z - t v, z1_hat = z + (1-t) v; (1-t) h_hat + t z1_hat == z.
std::pair<VecXd, VecXd> tweedie_decompose(const VecXd& z, const VecXd& v, double t);

struct McLossGrad {
  double loss = 0.0;  // 0.5 ||Y_p - Omega H P||_F^2
  MatXcd grad;        // -Omega^H (Y_p - Omega H P) P^H
};

McLossGrad mc_loss_and_grad(const MatXcd& h_est, const MatXcd& y_pilot,
                            const SamplingPattern& pattern, const PilotCodebook& codebook);

// n_iter steps of H <- H - alpha * grad/||grad||_F, re-evaluating each time;
// steps with ||grad||_F < 1e-12 are skipped.
MatXcd guided_update(const MatXcd& h_est, const MatXcd& y_pilot, const SamplingPattern& pattern,
                     const PilotCodebook& codebook, double alpha, int n_iter);

struct EstimateDiagnostics {
  double max_tweedie_dev = 0.0;  // max-abs over every step and user
  double final_residual = 0.0;   // ||Y_p - Omega H_hat P||_F of the estimate
  int steps = 0;
};

// Runs K parallel guided trajectories and returns the assembled N x K
// estimate. The per-user trajectory k starts from Gaussian noise seeded with
// derive_seed(cfg.seed, k).
MatXcd estimate_channels(const PilotObservation& obs, const VelocityModel& model,
                         const GuidanceConfig& cfg, EstimateDiagnostics* diag = nullptr);

}  // namespace fas
