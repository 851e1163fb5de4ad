#include "fas/uplink.hpp"

#include <algorithm>
#include <numeric>

namespace fas {

SamplingStrategy sampling_strategy_from_string(const std::string& s) {
  if (s == "uniform-grid") return SamplingStrategy::kUniformGrid;
  if (s == "random") return SamplingStrategy::kRandom;
  throw std::invalid_argument("unknown sampling strategy: " + s);
}

int PortMask::active_count() const {
  return static_cast<int>(std::count(x.begin(), x.end(), std::uint8_t{1}));
}

std::vector<int> PortMask::active_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < size(); ++i)
    if (x[static_cast<std::size_t>(i)]) idx.push_back(i);
  return idx;
}

void PortMask::validate(int m) const {
  for (auto v : x)
    if (v > 1) throw std::invalid_argument("PortMask: entries must be binary");
  if (active_count() != m)
    throw std::invalid_argument("PortMask: expected " + std::to_string(m) +
                                " active ports, got " + std::to_string(active_count()));
}

PortMask mask_from_indices(int n, const std::vector<int>& active) {
  PortMask mask;
  mask.x.assign(static_cast<std::size_t>(n), 0);
  for (int i : active) {
    if (i < 0 || i >= n) throw std::invalid_argument("mask_from_indices: index out of range");
    if (mask.x[static_cast<std::size_t>(i)]) throw std::invalid_argument("mask_from_indices: duplicate index");
    mask.x[static_cast<std::size_t>(i)] = 1;
  }
  return mask;
}

namespace {

bool is_power_of_two(int k) { return k > 0 && (k & (k - 1)) == 0; }

MatXcd sylvester_hadamard(int k) {
  MatXd h(1, 1);
  h(0, 0) = 1.0;
  while (h.rows() < k) {
    const Eigen::Index n = h.rows();
    MatXd next(2 * n, 2 * n);
    next.topLeftCorner(n, n) = h;
    next.topRightCorner(n, n) = h;
    next.bottomLeftCorner(n, n) = h;
    next.bottomRightCorner(n, n) = -h;
    h = std::move(next);
  }
  return (h / std::sqrt(static_cast<double>(k))).cast<Cplx>();
}

MatXcd unitary_dft(int k) {
  MatXcd f(k, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) {
      const double arg = -2.0 * kPi * static_cast<double>(r) * c / k;
      f(r, c) = scale * Cplx(std::cos(arg), std::sin(arg));
    }
  return f;
}

}  // namespace

PilotCodebook build_pilot_codebook(int k) {
  if (k <= 0) throw std::invalid_argument("build_pilot_codebook: K must be positive");
  return {is_power_of_two(k) ? sylvester_hadamard(k) : unitary_dft(k)};
}

SamplingPattern build_sampling_pattern(const Geometry& geom, int n_observed,
                                       SamplingStrategy strategy, std::uint64_t seed) {
  geom.validate();
  const int n = geom.ports();
  if (n_observed < 1 || n_observed > n)
    throw std::invalid_argument("build_sampling_pattern: need 1 <= N_O <= N");

  std::vector<int> indices;
  if (strategy == SamplingStrategy::kRandom) {
    Rng rng(seed);
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < n_observed; ++i) {
      const auto j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    indices.assign(pool.begin(), pool.begin() + n_observed);
    std::sort(indices.begin(), indices.end());
  } else {
    // Snap an evenly spaced gx x gy lattice onto the port grid, then top up
    // with the nearest unused ports if snapping collides.
    int gx = std::max(1, static_cast<int>(std::lround(std::sqrt(
                             static_cast<double>(n_observed) * geom.nx / geom.ny))));
    gx = std::min(gx, geom.nx);
    int gy = (n_observed + gx - 1) / gx;
    while (gy > geom.ny && gx < geom.nx) {
      ++gx;
      gy = (n_observed + gx - 1) / gx;
    }
    if (gx * gy < n_observed) throw std::invalid_argument("build_sampling_pattern: lattice too small");

    std::vector<std::uint8_t> used(static_cast<std::size_t>(n), 0);
    auto try_take = [&](int px, int py) {
      const int port = px + py * geom.nx;
      if (!used[static_cast<std::size_t>(port)]) {
        used[static_cast<std::size_t>(port)] = 1;
        indices.push_back(port);
      }
    };
    for (int j = 0; j < gy && static_cast<int>(indices.size()) < n_observed; ++j)
      for (int i = 0; i < gx && static_cast<int>(indices.size()) < n_observed; ++i) {
        const int px = std::min(geom.nx - 1, static_cast<int>((i + 0.5) * geom.nx / gx));
        const int py = std::min(geom.ny - 1, static_cast<int>((j + 0.5) * geom.ny / gy));
        try_take(px, py);
      }
    for (int p = 0; static_cast<int>(indices.size()) < n_observed; ++p)
      try_take(p % geom.nx, p / geom.nx);
    std::sort(indices.begin(), indices.end());
  }

  SamplingPattern pattern;
  pattern.n_ports = n;
  pattern.indices = std::move(indices);
  pattern.delta = static_cast<double>(n_observed) / n;
  return pattern;
}

MatXcd gather_rows(const MatXcd& channel, const std::vector<int>& indices) {
  MatXcd out(static_cast<Eigen::Index>(indices.size()), channel.cols());
  for (std::size_t r = 0; r < indices.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = channel.row(indices[r]);
  return out;
}

MatXcd scatter_rows(const MatXcd& observed, const std::vector<int>& indices, int n) {
  MatXcd out = MatXcd::Zero(n, observed.cols());
  for (std::size_t r = 0; r < indices.size(); ++r)
    out.row(indices[r]) = observed.row(static_cast<Eigen::Index>(r));
  return out;
}

PilotObservation observe_pilots(const MatXcd& channel, const SamplingPattern& pattern,
                                const PilotCodebook& codebook, double sigma2,
                                std::uint64_t seed) {
  if (channel.rows() != pattern.n_ports)
    throw std::invalid_argument("observe_pilots: channel row count != pattern N");
  if (channel.cols() != codebook.users())
    throw std::invalid_argument("observe_pilots: channel column count != codebook K");
  if (sigma2 < 0.0) throw std::invalid_argument("observe_pilots: negative noise variance");

  MatXcd y = gather_rows(channel, pattern.indices) * codebook.p;
  if (sigma2 > 0.0) {
    Rng rng(seed);
    const double s = std::sqrt(sigma2);
    for (Eigen::Index c = 0; c < y.cols(); ++c)
      for (Eigen::Index r = 0; r < y.rows(); ++r)
        y(r, c) += s * rng.normal_complex();
  }
  return {std::move(y), pattern, codebook, sigma2};
}

MatXcd mmse_combiner(const PortMask& mask, const MatXcd& channel, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("mmse_combiner: sigma2 must be positive");
  if (mask.size() != channel.rows()) throw std::invalid_argument("mmse_combiner: mask/channel size mismatch");
  const auto active = mask.active_indices();
  if (active.empty()) throw std::invalid_argument("mmse_combiner: empty mask");

  const MatXcd h_eff = gather_rows(channel, active);  // M x K
  const Eigen::Index m = h_eff.rows();
  MatXcd a = h_eff * h_eff.adjoint();
  a += sigma2 * MatXcd::Identity(m, m);

  Eigen::SelfAdjointEigenSolver<MatXcd> eig(a);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e14)
    throw std::runtime_error("mmse_combiner: system matrix condition exceeds 1e14");

  return a.llt().solve(h_eff);
}

RateReport sinr_and_rates(const PortMask& mask, const MatXcd& channel, double sigma2) {
  RateReport report;
  report.combiner = mmse_combiner(mask, channel, sigma2);
  const MatXcd h_eff = gather_rows(channel, mask.active_indices());
  const Eigen::Index k = h_eff.cols();

  report.sinr.resize(k);
  report.rates.resize(k);
  const MatXcd cross = report.combiner.adjoint() * h_eff;  // (k, j) = w_k^H h_j
  for (Eigen::Index u = 0; u < k; ++u) {
    const double signal = std::norm(cross(u, u));
    double interference = 0.0;
    for (Eigen::Index j = 0; j < k; ++j)
      if (j != u) interference += std::norm(cross(u, j));
    const double noise = sigma2 * report.combiner.col(u).squaredNorm();
    report.sinr[u] = signal / (interference + noise);
    report.rates[u] = std::log2(1.0 + report.sinr[u]);
  }
  report.min_rate = report.rates.minCoeff();
  return report;
}

double utility(const PortMask& mask, const MatXcd& channel, double sigma2) {
  return sinr_and_rates(mask, channel, sigma2).min_rate;
}

}  // namespace fas
