// Classical estimators operating on per-user decoupled observations
// y_k = [Y_p P^H]_{:,k}: full-observation LS, OMP and SBL over an angular
// dictionary, and LMMSE under an empirical Gaussian prior.
#pragma once

#include "fas/dataset.hpp"
#include "fas/uplink.hpp"

namespace fas {

struct AngularDictionary {
  int grid_res = 0;            // G per angle axis
  std::vector<double> thetas;  // elevation grid
  std::vector<double> phis;    // azimuth grid
  MatXcd atoms;                // N x G^2, unit-norm columns; column p*G+q

  int atom_count() const { return static_cast<int>(atoms.cols()); }
};

// Cell-centered uniform grids over theta in [-pi/2, pi/2] and phi in
// [-pi, pi]; atom (p,q) = vec(a_x a_y^T)/sqrt(N).
AngularDictionary build_angular_dictionary(const Geometry& geom, int grid_res);

// Columns of Y_p P^H; unitary codebooks preserve the noise statistics.
MatXcd decouple_users(const MatXcd& y_pilot, const PilotCodebook& codebook);

// Requires a full-coverage pattern; reorders Y_p P^H back to port order.
MatXcd ls_full(const MatXcd& y_pilot, const PilotCodebook& codebook,
               const SamplingPattern& pattern);

struct OmpConfig {
  int sparsity_budget = 0;        // required, >= 1
  double residual_tol = 1e-6;     // relative to ||y||
};

VecXcd omp_estimate(const VecXcd& y, const SamplingPattern& pattern,
                    const AngularDictionary& dict, const OmpConfig& cfg);

struct SblConfig {
  int max_iter = 200;
  double tol = 1e-6;              // relative hyperparameter change
  double prune_threshold = 1e-6;  // variances below are frozen out
};

struct SblResult {
  VecXcd h;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik;  // marginal log-likelihood per iteration
};

SblResult sbl_estimate(const VecXcd& y, const SamplingPattern& pattern,
                       const AngularDictionary& dict, double sigma2, const SblConfig& cfg);

struct CovariancePrior {
  MatXcd r;  // N x N Hermitian PSD
};

// R = (1/S) sum h h^H over the complex-reassembled samples.
CovariancePrior empirical_covariance(const Dataset& dataset);

// h_hat = R Omega^H (Omega R Omega^H + sigma2 I)^{-1} y.
VecXcd lmmse_estimate(const VecXcd& y, const SamplingPattern& pattern,
                      const CovariancePrior& prior, double sigma2);

}  // namespace fas
