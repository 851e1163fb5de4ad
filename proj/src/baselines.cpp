#include "fas/baselines.hpp"

#include <algorithm>

namespace fas {

AngularDictionary build_angular_dictionary(const Geometry& geom, int grid_res) {
  geom.validate();
  if (grid_res < 1) throw std::invalid_argument("build_angular_dictionary: G must be >= 1");
  AngularDictionary dict;
  dict.grid_res = grid_res;
  dict.thetas.resize(static_cast<std::size_t>(grid_res));
  dict.phis.resize(static_cast<std::size_t>(grid_res));
  for (int i = 0; i < grid_res; ++i) {
    dict.thetas[static_cast<std::size_t>(i)] = -kPi / 2 + (i + 0.5) * kPi / grid_res;
    dict.phis[static_cast<std::size_t>(i)] = -kPi + (i + 0.5) * 2.0 * kPi / grid_res;
  }
  const int n = geom.ports();
  dict.atoms.resize(n, static_cast<Eigen::Index>(grid_res) * grid_res);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int p = 0; p < grid_res; ++p)
    for (int q = 0; q < grid_res; ++q) {
      auto [ax, ay] = steering_vectors(geom, dict.thetas[static_cast<std::size_t>(p)],
                                       dict.phis[static_cast<std::size_t>(q)]);
      const MatXcd outer = ax * ay.transpose();
      dict.atoms.col(static_cast<Eigen::Index>(p) * grid_res + q) =
          scale * Eigen::Map<const VecXcd>(outer.data(), n);
    }
  return dict;
}

MatXcd decouple_users(const MatXcd& y_pilot, const PilotCodebook& codebook) {
  if (y_pilot.cols() != codebook.users())
    throw std::invalid_argument("decouple_users: column/user mismatch");
  return y_pilot * codebook.p.adjoint();
}

MatXcd ls_full(const MatXcd& y_pilot, const PilotCodebook& codebook,
               const SamplingPattern& pattern) {
  if (!pattern.full())
    throw std::invalid_argument("ls_full: requires full observation (N_O == N)");
  return scatter_rows(decouple_users(y_pilot, codebook), pattern.indices, pattern.n_ports);
}

VecXcd omp_estimate(const VecXcd& y, const SamplingPattern& pattern,
                    const AngularDictionary& dict, const OmpConfig& cfg) {
  if (cfg.sparsity_budget < 1) throw std::invalid_argument("omp_estimate: budget must be >= 1");
  if (y.size() != pattern.observed()) throw std::invalid_argument("omp_estimate: length mismatch");

  const MatXcd phi = gather_rows(dict.atoms, pattern.indices);  // N_O x G^2
  const Eigen::Index atoms = phi.cols();
  VecXd col_norms(atoms);
  for (Eigen::Index j = 0; j < atoms; ++j)
    col_norms[j] = std::max(phi.col(j).norm(), 1e-300);

  VecXcd residual = y;
  const double stop_norm = cfg.residual_tol * y.norm();
  std::vector<Eigen::Index> support;
  VecXcd coeffs;

  while (static_cast<int>(support.size()) < cfg.sparsity_budget) {
    // Normalized correlation; ties resolved by the smallest atom index.
    Eigen::Index best = -1;
    double best_val = -1.0;
    const VecXcd corr = phi.adjoint() * residual;
    for (Eigen::Index j = 0; j < atoms; ++j) {
      if (std::find(support.begin(), support.end(), j) != support.end()) continue;
      const double val = std::abs(corr[j]) / col_norms[j];
      if (val > best_val) {
        best_val = val;
        best = j;
      }
    }
    if (best < 0) break;
    support.push_back(best);

    MatXcd sub(phi.rows(), static_cast<Eigen::Index>(support.size()));
    for (std::size_t s = 0; s < support.size(); ++s) sub.col(static_cast<Eigen::Index>(s)) = phi.col(support[s]);
    Eigen::ColPivHouseholderQR<MatXcd> qr(sub);
    if (qr.rank() < sub.cols()) {
      // Rank-deficient support: minimum-norm solution via SVD pseudo-inverse.
      Eigen::JacobiSVD<MatXcd> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
      coeffs = svd.solve(y);
    } else {
      coeffs = qr.solve(y);
    }
    residual = y - sub * coeffs;
    if (residual.norm() <= stop_norm) break;
  }

  VecXcd h = VecXcd::Zero(dict.atoms.rows());
  for (std::size_t s = 0; s < support.size(); ++s) h += coeffs[static_cast<Eigen::Index>(s)] * dict.atoms.col(support[s]);
  return h;
}

SblResult sbl_estimate(const VecXcd& y, const SamplingPattern& pattern,
                       const AngularDictionary& dict, double sigma2, const SblConfig& cfg) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sbl_estimate: sigma2 must be positive");
  if (y.size() != pattern.observed()) throw std::invalid_argument("sbl_estimate: length mismatch");

  const MatXcd phi = gather_rows(dict.atoms, pattern.indices);
  const Eigen::Index m = phi.rows();
  const Eigen::Index atoms = phi.cols();

  VecXd gamma = VecXd::Ones(atoms);
  std::vector<Eigen::Index> active(static_cast<std::size_t>(atoms));
  for (Eigen::Index j = 0; j < atoms; ++j) active[static_cast<std::size_t>(j)] = j;

  SblResult result;
  VecXcd mu_active;
  std::vector<Eigen::Index> mu_index;

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    MatXcd phi_a(m, static_cast<Eigen::Index>(active.size()));
    for (std::size_t s = 0; s < active.size(); ++s) phi_a.col(static_cast<Eigen::Index>(s)) = phi.col(active[s]);

    // C = sigma2 I + Phi Gamma Phi^H in the measurement domain.
    MatXcd c = sigma2 * MatXcd::Identity(m, m);
    for (std::size_t s = 0; s < active.size(); ++s)
      c.noalias() += gamma[active[s]] * (phi_a.col(static_cast<Eigen::Index>(s)) *
                                         phi_a.col(static_cast<Eigen::Index>(s)).adjoint());

    Eigen::LLT<MatXcd> llt(c);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("sbl_estimate: covariance factorization failed");
    const VecXcd cinv_y = llt.solve(y);
    const MatXcd cinv_phi = llt.solve(phi_a);

    double logdet = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) logdet += 2.0 * std::log(std::real(llt.matrixL()(i, i)));
    result.loglik.push_back(-static_cast<double>(m) * std::log(kPi) - logdet -
                            std::real(y.dot(cinv_y)));

    // Posterior moments and the EM variance update.
    double max_rel_change = 0.0;
    mu_active.resize(static_cast<Eigen::Index>(active.size()));
    mu_index.assign(active.begin(), active.end());
    std::vector<Eigen::Index> next_active;
    next_active.reserve(active.size());
    for (std::size_t s = 0; s < active.size(); ++s) {
      const Eigen::Index j = active[s];
      const Cplx mu = gamma[j] * phi_a.col(static_cast<Eigen::Index>(s)).dot(cinv_y);
      const double sjj =
          std::real(phi_a.col(static_cast<Eigen::Index>(s)).dot(cinv_phi.col(static_cast<Eigen::Index>(s))));
      const double post_var = gamma[j] - gamma[j] * gamma[j] * sjj;
      const double updated = std::norm(mu) + std::max(0.0, post_var);
      mu_active[static_cast<Eigen::Index>(s)] = mu;
      max_rel_change = std::max(max_rel_change, std::abs(updated - gamma[j]) / std::max(gamma[j], 1e-300));
      gamma[j] = updated;
      if (updated >= cfg.prune_threshold) next_active.push_back(j);
      else gamma[j] = 0.0;
    }
    result.iterations = iter + 1;
    if (max_rel_change < cfg.tol) {
      result.converged = true;
      break;
    }
    if (next_active.empty()) break;
    active = std::move(next_active);
  }

  VecXcd h = VecXcd::Zero(dict.atoms.rows());
  for (std::size_t s = 0; s < mu_index.size(); ++s)
    h += mu_active[static_cast<Eigen::Index>(s)] * dict.atoms.col(mu_index[s]);
  result.h = std::move(h);
  return result;
}

CovariancePrior empirical_covariance(const Dataset& dataset) {
  if (dataset.count() < 1) throw std::invalid_argument("empirical_covariance: empty dataset");
  const int n = dataset.geometry.ports();
  MatXcd r = MatXcd::Zero(n, n);
  for (int i = 0; i < dataset.count(); ++i) {
    const VecXcd h = dataset.sample_complex(i);
    r.noalias() += h * h.adjoint();
  }
  r /= static_cast<double>(dataset.count());
  // Symmetrize away accumulation round-off.
  r = 0.5 * (r + r.adjoint().eval());
  return {std::move(r)};
}

VecXcd lmmse_estimate(const VecXcd& y, const SamplingPattern& pattern,
                      const CovariancePrior& prior, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("lmmse_estimate: sigma2 must be positive");
  if (y.size() != pattern.observed()) throw std::invalid_argument("lmmse_estimate: length mismatch");
  const Eigen::Index m = y.size();
  const auto& idx = pattern.indices;

  MatXcd r_oo(m, m);
  MatXcd r_fo(prior.r.rows(), m);
  for (Eigen::Index c = 0; c < m; ++c) {
    r_fo.col(c) = prior.r.col(idx[static_cast<std::size_t>(c)]);
    for (Eigen::Index r = 0; r < m; ++r)
      r_oo(r, c) = prior.r(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
  }
  MatXcd a = r_oo + sigma2 * MatXcd::Identity(m, m);
  Eigen::SelfAdjointEigenSolver<MatXcd> eig(a);
  const double lo = eig.eigenvalues().minCoeff();
  if (!(lo > 0.0) || eig.eigenvalues().maxCoeff() / lo > 1e14)
    throw std::runtime_error("lmmse_estimate: system matrix condition exceeds 1e14");
  return r_fo * a.llt().solve(y);
}

}  // namespace fas
