// Synthetic training corpus: seeded finite-scattering draws, normalized by a
// single scalar so the complex channel entries have unit empirical variance.
#pragma once

#include <filesystem>

#include "fas/geometry.hpp"

namespace fas {

// Angle law of the synthetic generator. The default draws path angles
// i.i.d. uniform. The clustered law spreads each dominant path into
// subpaths jittered around a uniform cluster center, mimicking the angle
// spreads of measured channels; it breaks exact angular-dictionary sparsity.
struct ChannelLaw {
  enum class Kind { kUniform, kClustered };
  Kind kind = Kind::kUniform;
  int subpaths = 8;                     // per cluster (clustered law only)
  double az_spread_rad = 15.0 * kPi / 180.0;
  double el_spread_rad = 7.5 * kPi / 180.0;

  bool operator==(const ChannelLaw&) const = default;
};

struct Dataset {
  Geometry geometry;
  int n_paths = 0;
  ChannelLaw law;
  std::uint64_t seed = 0;
  double norm_const = 1.0;  // divisor applied to every raw sample
  // One column per sample, length 2N ([Re; Im] stacking), 32-bit floats.
  MatXf samples;

  int count() const { return static_cast<int>(samples.cols()); }
  int dim() const { return static_cast<int>(samples.rows()); }

  // Sample i as a double-precision real vector / complex channel.
  VecXd sample_real(int i) const { return samples.col(i).cast<double>(); }
  VecXcd sample_complex(int i) const;
};

// Draws `count` channels with phi ~ U(-pi, pi), theta ~ U(-pi/2, pi/2) and
// standard complex Gaussian gains, i.i.d. per path (or the clustered law
// around such centers), then divides the whole set by one scalar so the
// mean squared magnitude of the complex entries is exactly 1. Per-sample
// seeds are derived from `seed`, so regeneration is bit-exact and shardable.
Dataset generate_dataset(const Geometry& geom, int n_paths, int count, std::uint64_t seed,
                         const ChannelLaw& law = {});

// Directory container: manifest.json + samples.f32 (row-major [count, 2N]).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Fresh channel from the same generative law as `ds`, scaled by the stored
// normalization constant; used for held-out evaluation draws.
VecXcd sample_new_channel(const Dataset& ds, std::uint64_t seed);

}  // namespace fas
