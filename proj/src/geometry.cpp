#include "fas/geometry.hpp"

namespace fas {

std::pair<VecXcd, VecXcd> steering_vectors(const Geometry& geom, double theta, double phi) {
  geom.validate();
  if (!std::isfinite(theta) || !std::isfinite(phi))
    throw std::invalid_argument("steering_vectors: non-finite angle");
  if (theta < -kPi / 2 - 1e-12 || theta > kPi / 2 + 1e-12)
    throw std::invalid_argument("steering_vectors: elevation outside [-pi/2, pi/2]");
  if (phi < -kPi - 1e-12 || phi > kPi + 1e-12)
    throw std::invalid_argument("steering_vectors: azimuth outside [-pi, pi]");

  const double ux = std::cos(theta) * std::sin(phi);
  const double uy = std::sin(theta);
  VecXcd ax(geom.nx), ay(geom.ny);
  for (int n = 0; n < geom.nx; ++n) {
    const double arg = -2.0 * kPi * geom.wx * static_cast<double>(n) / (geom.nx - 1) * ux;
    ax[n] = Cplx(std::cos(arg), std::sin(arg));
  }
  for (int n = 0; n < geom.ny; ++n) {
    const double arg = -2.0 * kPi * geom.wy * static_cast<double>(n) / (geom.ny - 1) * uy;
    ay[n] = Cplx(std::cos(arg), std::sin(arg));
  }
  return {std::move(ax), std::move(ay)};
}

MatXcd synthesize_channel(const Geometry& geom, const std::vector<PathParams>& paths) {
  geom.validate();
  if (paths.empty()) throw std::invalid_argument("synthesize_channel: empty path list");
  MatXcd h = MatXcd::Zero(geom.nx, geom.ny);
  for (const auto& p : paths) {
    auto [ax, ay] = steering_vectors(geom, p.elevation, p.azimuth);
    h.noalias() += p.gain * (ax * ay.transpose());
  }
  h *= std::sqrt(1.0 / static_cast<double>(paths.size()));
  return h;
}

VecXcd vectorize_grid(const MatXcd& grid) {
  return Eigen::Map<const VecXcd>(grid.data(), grid.size());
}

MatXcd grid_from_vector(const VecXcd& h, const Geometry& geom) {
  if (h.size() != geom.ports())
    throw std::invalid_argument("grid_from_vector: length mismatch");
  return Eigen::Map<const MatXcd>(h.data(), geom.nx, geom.ny);
}

VecXd complex_to_real(const VecXcd& h_cplx) {
  const Eigen::Index n = h_cplx.size();
  VecXd h(2 * n);
  h.head(n) = h_cplx.real();
  h.tail(n) = h_cplx.imag();
  return h;
}

VecXcd real_to_complex(const VecXd& h_real) {
  if (h_real.size() % 2 != 0)
    throw std::invalid_argument("real_to_complex: odd-length input");
  const Eigen::Index n = h_real.size() / 2;
  VecXcd h(n);
  h.real() = h_real.head(n);
  h.imag() = h_real.tail(n);
  return h;
}

}  // namespace fas
