#include "fas/dataset.hpp"

#include "fas/io.hpp"

#include <algorithm>

namespace fas {

VecXcd Dataset::sample_complex(int i) const {
  return real_to_complex(sample_real(i));
}

namespace {

double wrap_azimuth(double phi) {
  while (phi > kPi) phi -= 2.0 * kPi;
  while (phi < -kPi) phi += 2.0 * kPi;
  return phi;
}

// One raw (un-normalized) channel draw; the per-path draw order is part of
// the on-disk reproducibility contract: theta, phi, Re(g), Im(g), then any
// subpath jitter for the clustered law.
VecXcd draw_channel(const Geometry& geom, int n_paths, const ChannelLaw& law,
                    std::uint64_t sample_seed) {
  Rng rng(sample_seed);
  std::vector<PathParams> paths;
  for (int p = 0; p < n_paths; ++p) {
    const double theta_c = rng.uniform(-kPi / 2, kPi / 2);
    const double phi_c = rng.uniform(-kPi, kPi);
    const double re = rng.normal();
    const double im = rng.normal();
    const Cplx gain(re * M_SQRT1_2, im * M_SQRT1_2);
    if (law.kind == ChannelLaw::Kind::kUniform) {
      paths.push_back({gain, theta_c, phi_c});
      continue;
    }
    // Clustered: spread the path into jittered subpaths of equal mean power.
    const double sub_scale = 1.0 / std::sqrt(static_cast<double>(law.subpaths));
    for (int s = 0; s < law.subpaths; ++s) {
      const double theta = std::clamp(theta_c + law.el_spread_rad * rng.normal(),
                                      -kPi / 2, kPi / 2);
      const double phi = wrap_azimuth(phi_c + law.az_spread_rad * rng.normal());
      const double sre = rng.normal();
      const double sim = rng.normal();
      paths.push_back({gain * Cplx(sre * M_SQRT1_2, sim * M_SQRT1_2) * sub_scale, theta, phi});
    }
  }
  // synthesize_channel divides by sqrt(paths.size()); rescale so the divisor
  // is sqrt(n_paths) regardless of the subpath expansion.
  const double fix = std::sqrt(static_cast<double>(paths.size()) / n_paths);
  return fix * vectorize_grid(synthesize_channel(geom, paths));
}

}  // namespace

Dataset generate_dataset(const Geometry& geom, int n_paths, int count, std::uint64_t seed,
                         const ChannelLaw& law) {
  geom.validate();
  if (n_paths < 1) throw std::invalid_argument("generate_dataset: n_paths must be >= 1");
  if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
  if (law.kind == ChannelLaw::Kind::kClustered && law.subpaths < 1)
    throw std::invalid_argument("generate_dataset: clustered law needs subpaths >= 1");

  const int n = geom.ports();
  MatXd raw(2 * n, count);
  std::vector<double> energy(static_cast<std::size_t>(count));
  parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
    const VecXcd h = draw_channel(geom, n_paths, law, derive_seed(seed, i));
    raw.col(static_cast<Eigen::Index>(i)) = complex_to_real(h);
    energy[i] = h.squaredNorm();
  });

  // Single global scalar: mean |h_n|^2 over the whole corpus becomes 1.
  double total = 0.0;
  for (double e : energy) total += e;
  const double norm_const = std::sqrt(total / (static_cast<double>(count) * n));

  Dataset ds;
  ds.geometry = geom;
  ds.n_paths = n_paths;
  ds.law = law;
  ds.seed = seed;
  ds.norm_const = norm_const;
  ds.samples = (raw / norm_const).cast<float>();
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Json m;
  m["geometry"] = {{"nx", ds.geometry.nx}, {"ny", ds.geometry.ny},
                   {"wx", ds.geometry.wx}, {"wy", ds.geometry.wy}};
  m["n_paths"] = ds.n_paths;
  m["law"] = {{"kind", ds.law.kind == ChannelLaw::Kind::kClustered ? "clustered" : "uniform"},
              {"subpaths", ds.law.subpaths},
              {"az_spread_rad", ds.law.az_spread_rad},
              {"el_spread_rad", ds.law.el_spread_rad}};
  m["count"] = ds.count();
  m["seed"] = ds.seed;
  m["norm_const"] = ds.norm_const;
  m["dtype"] = "float32";
  m["shape"] = {ds.count(), ds.dim()};
  m["byte_order"] = "little-endian";
  m["layout"] = "row-major";
  m["data_file"] = "samples.f32";
  write_json_file(dir / "manifest.json", m);
  // Column-major (2N x count) in memory equals row-major [count, 2N] on disk.
  write_raw_f32(dir / "samples.f32", ds.samples.data(),
                static_cast<std::size_t>(ds.samples.size()));
}

VecXcd sample_new_channel(const Dataset& ds, std::uint64_t seed) {
  return draw_channel(ds.geometry, ds.n_paths, ds.law, seed) / ds.norm_const;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const Json m = read_json_file(dir / "manifest.json");
  Dataset ds;
  ds.geometry = {m["geometry"]["nx"].get<int>(), m["geometry"]["ny"].get<int>(),
                 m["geometry"]["wx"].get<double>(), m["geometry"]["wy"].get<double>()};
  ds.n_paths = m["n_paths"].get<int>();
  if (m.contains("law")) {
    ds.law.kind = m["law"]["kind"] == "clustered" ? ChannelLaw::Kind::kClustered
                                                  : ChannelLaw::Kind::kUniform;
    ds.law.subpaths = m["law"]["subpaths"].get<int>();
    ds.law.az_spread_rad = m["law"]["az_spread_rad"].get<double>();
    ds.law.el_spread_rad = m["law"]["el_spread_rad"].get<double>();
  }
  ds.seed = m["seed"].get<std::uint64_t>();
  ds.norm_const = m["norm_const"].get<double>();
  const int count = m["count"].get<int>();
  const int dim = 2 * ds.geometry.ports();
  if (m["dtype"] != "float32" || m["layout"] != "row-major" || m["byte_order"] != "little-endian")
    throw std::runtime_error("load_dataset: unsupported container flavor");
  const auto flat = read_raw_f32(dir / m.value("data_file", "samples.f32"),
                                 static_cast<std::size_t>(count) * dim);
  ds.samples = Eigen::Map<const MatXf>(flat.data(), dim, count);
  return ds;
}

}  // namespace fas
