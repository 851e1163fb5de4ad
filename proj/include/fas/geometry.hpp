// Finite-scattering 2D fluid-antenna channel model: port-grid geometry,
// steering vectors, multipath synthesis, and the complex<->real stacking
// used by the learned models.
//
// Vectorization convention (shared project-wide): grids are stored as
// N_x x N_y matrices and vectorized column-major, i.e. the x index runs
// fastest, port n = x + y * N_x.
#pragma once

#include "fas/common.hpp"

namespace fas {

struct Geometry {
  int nx = 0;           // ports along x
  int ny = 0;           // ports along y
  double wx = 0.0;      // aperture along x, in wavelengths
  double wy = 0.0;      // aperture along y, in wavelengths

  int ports() const { return nx * ny; }

  void validate() const {
    if (nx < 2 || ny < 2) throw std::invalid_argument("Geometry: nx, ny must be >= 2");
    if (!(wx > 0.0) || !(wy > 0.0)) throw std::invalid_argument("Geometry: apertures must be positive");
  }

  bool operator==(const Geometry& o) const {
    return nx == o.nx && ny == o.ny && wx == o.wx && wy == o.wy;
  }
};

struct PathParams {
  Cplx gain;
  double elevation = 0.0;  // theta in [-pi/2, pi/2]
  double azimuth = 0.0;    // phi in [-pi, pi]
};

// Axis steering vectors. a_x[n] = exp(-j 2 pi n Wx/(Nx-1) cos(theta) sin(phi)),
// a_y[n] = exp(-j 2 pi n Wy/(Ny-1) sin(theta)).
std::pair<VecXcd, VecXcd> steering_vectors(const Geometry& geom, double theta, double phi);

// H = sqrt(1/N_p) * sum_i g_i a_x(theta_i, phi_i) a_y(theta_i, phi_i)^T.
MatXcd synthesize_channel(const Geometry& geom, const std::vector<PathParams>& paths);

// Column-major flatten of the port grid and its inverse.
VecXcd vectorize_grid(const MatXcd& grid);
MatXcd grid_from_vector(const VecXcd& h, const Geometry& geom);

// h = [Re(h~); Im(h~)] and its inverse.
VecXd complex_to_real(const VecXcd& h_cplx);
VecXcd real_to_complex(const VecXd& h_real);

}  // namespace fas
