// Uplink pilot observation and data-phase evaluation: orthogonal pilot
// codebooks, spatial sub-sampling patterns, noisy observations, the MMSE
// receiver, and per-user SINR / rate / min-rate utility.
#pragma once

#include "fas/geometry.hpp"

namespace fas {

struct PilotCodebook {
  MatXcd p;  // K x K, p * p^H = I_K
  int users() const { return static_cast<int>(p.rows()); }
};

// Spatial sub-sampling over the port grid. `indices` is the ordered set O;
// the selection operator Omega_O is applied implicitly by row gather.
struct SamplingPattern {
  int n_ports = 0;                // N
  std::vector<int> indices;       // distinct, in [0, N)
  double delta = 0.0;             // |O| / N

  int observed() const { return static_cast<int>(indices.size()); }
  bool full() const { return observed() == n_ports; }
  // Pilot cycles needed with M RF chains; reporting only.
  int cycles(int m) const { return (observed() + m - 1) / m; }
};

enum class SamplingStrategy { kUniformGrid, kRandom };
SamplingStrategy sampling_strategy_from_string(const std::string& s);

struct NoiseModel {
  double sigma2 = 0.0;  // per complex entry
  static NoiseModel from_snr_db(double snr_db) {
    return {std::pow(10.0, -snr_db / 10.0)};
  }
  double snr_db() const { return -10.0 * std::log10(sigma2); }
};

// Binary port-activation mask with exactly M ones.
struct PortMask {
  std::vector<std::uint8_t> x;  // length N, entries in {0, 1}

  int size() const { return static_cast<int>(x.size()); }
  int active_count() const;
  std::vector<int> active_indices() const;  // ascending
  void validate(int m) const;               // throws unless ||x||_1 == m
};

PortMask mask_from_indices(int n, const std::vector<int>& active);

struct PilotObservation {
  MatXcd y;  // N_O x K
  SamplingPattern pattern;
  PilotCodebook codebook;
  double sigma2 = 0.0;
};

struct RateReport {
  MatXcd combiner;       // M x K
  VecXd sinr;            // per user
  VecXd rates;           // log2(1 + sinr)
  double min_rate = 0.0;
};

// Sylvester-Hadamard (scaled by 1/sqrt(K)) when K is a power of two,
// unitary DFT otherwise.
PilotCodebook build_pilot_codebook(int k);

SamplingPattern build_sampling_pattern(const Geometry& geom, int n_observed,
                                       SamplingStrategy strategy, std::uint64_t seed = 0);

// Rows of `channel` gathered at pattern indices / mask active indices.
MatXcd gather_rows(const MatXcd& channel, const std::vector<int>& indices);
// Scatter N_O x K rows back into an N x K matrix (zeros elsewhere).
MatXcd scatter_rows(const MatXcd& observed, const std::vector<int>& indices, int n);

// Y_p = Omega_O * H * P + noise, noise ~ CN(0, sigma2) i.i.d.
PilotObservation observe_pilots(const MatXcd& channel, const SamplingPattern& pattern,
                                const PilotCodebook& codebook, double sigma2,
                                std::uint64_t seed);

// W = (Omega_x H H^H Omega_x^T + sigma2 I)^{-1} Omega_x H. Throws if the
// system matrix condition number exceeds 1e14.
MatXcd mmse_combiner(const PortMask& mask, const MatXcd& channel, double sigma2);

RateReport sinr_and_rates(const PortMask& mask, const MatXcd& channel, double sigma2);

// min_k R_k for the given selection; the Stage II objective.
double utility(const PortMask& mask, const MatXcd& channel, double sigma2);

}  // namespace fas
