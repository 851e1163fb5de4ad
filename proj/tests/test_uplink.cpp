#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fas/dataset.hpp"
#include "fas/uplink.hpp"

using namespace fas;

namespace {

const Geometry kGeom{8, 8, 0.875, 0.875};

MatXcd random_channel(int n, int k, Rng& rng) {
  MatXcd h(n, k);
  for (int c = 0; c < k; ++c)
    for (int r = 0; r < n; ++r) h(r, c) = rng.normal_complex();
  return h;
}

// Independent utility evaluation: explicit selection matrix, explicit
// inverse, per-term SINR loops.
double utility_oracle(const PortMask& mask, const MatXcd& channel, double sigma2) {
  const int n = static_cast<int>(channel.rows());
  const int k = static_cast<int>(channel.cols());
  const auto active = mask.active_indices();
  const int m = static_cast<int>(active.size());
  MatXd omega = MatXd::Zero(m, n);
  for (int r = 0; r < m; ++r) omega(r, active[static_cast<std::size_t>(r)]) = 1.0;
  const MatXcd heff = omega.cast<Cplx>() * channel;
  const MatXcd w = (heff * heff.adjoint() + sigma2 * MatXcd::Identity(m, m)).inverse() * heff;
  double worst = std::numeric_limits<double>::infinity();
  for (int u = 0; u < k; ++u) {
    const Cplx sig = (w.col(u).adjoint() * heff.col(u))(0, 0);
    double interf = 0.0;
    for (int j = 0; j < k; ++j)
      if (j != u) interf += std::norm((w.col(u).adjoint() * heff.col(j))(0, 0));
    const double gamma = std::norm(sig) / (interf + sigma2 * w.col(u).squaredNorm());
    worst = std::min(worst, std::log2(1.0 + gamma));
  }
  return worst;
}

// Eq.-style SINR from an arbitrary combiner, for invariance checks.
VecXd sinr_from_combiner(const MatXcd& w, const MatXcd& heff, double sigma2) {
  const int k = static_cast<int>(heff.cols());
  VecXd out(k);
  for (int u = 0; u < k; ++u) {
    const double sig = std::norm((w.col(u).adjoint() * heff.col(u))(0, 0));
    double interf = 0.0;
    for (int j = 0; j < k; ++j)
      if (j != u) interf += std::norm((w.col(u).adjoint() * heff.col(j))(0, 0));
    out[u] = sig / (interf + sigma2 * w.col(u).squaredNorm());
  }
  return out;
}

}  // namespace

TEST_CASE("codebooks: identity, Hadamard, unitarity, DFT fallback") {
  CHECK(build_pilot_codebook(1).p(0, 0) == Cplx(1.0, 0.0));

  const auto p2 = build_pilot_codebook(2).p;
  const double s = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(p2(0, 0) - Cplx(s, 0)) < 1e-14);
  CHECK(std::abs(p2(0, 1) - Cplx(s, 0)) < 1e-14);
  CHECK(std::abs(p2(1, 0) - Cplx(s, 0)) < 1e-14);
  CHECK(std::abs(p2(1, 1) - Cplx(-s, 0)) < 1e-14);
  CHECK((p2 * p2.adjoint() - MatXcd::Identity(2, 2)).norm() < 1e-12);

  for (int k : {4, 3, 5, 8}) {
    const auto p = build_pilot_codebook(k).p;
    CHECK((p * p.adjoint() - MatXcd::Identity(k, k)).norm() < 1e-12);
  }
  CHECK_THROWS(build_pilot_codebook(0));
}

TEST_CASE("paper-scale sampling ratio") {
  const Geometry g{25, 25, 3.0, 3.0};
  const auto pat = build_sampling_pattern(g, 121, SamplingStrategy::kUniformGrid);
  CHECK(pat.delta == doctest::Approx(0.1936));
  CHECK(pat.observed() == 121);
  std::set<int> uniq(pat.indices.begin(), pat.indices.end());
  CHECK(uniq.size() == 121);
}

TEST_CASE("full observation is a permutation of all ports") {
  const auto pat = build_sampling_pattern(kGeom, 64, SamplingStrategy::kUniformGrid);
  CHECK(pat.full());
  std::set<int> uniq(pat.indices.begin(), pat.indices.end());
  CHECK(uniq.size() == 64);
  CHECK(*uniq.begin() == 0);
  CHECK(*uniq.rbegin() == 63);
}

TEST_CASE("random pattern is seed deterministic and distinct") {
  const auto a = build_sampling_pattern(kGeom, 17, SamplingStrategy::kRandom, 5);
  const auto b = build_sampling_pattern(kGeom, 17, SamplingStrategy::kRandom, 5);
  CHECK(a.indices == b.indices);
  std::set<int> uniq(a.indices.begin(), a.indices.end());
  CHECK(uniq.size() == 17);
  CHECK_THROWS(build_sampling_pattern(kGeom, 65, SamplingStrategy::kRandom, 5));
}

TEST_CASE("pattern cycles round up") {
  const auto pat = build_sampling_pattern(kGeom, 17, SamplingStrategy::kRandom, 5);
  CHECK(pat.cycles(4) == 5);
}

TEST_CASE("noiseless full observation inverts exactly") {
  Rng rng(7);
  const MatXcd h = random_channel(64, 4, rng);
  const auto pat = build_sampling_pattern(kGeom, 64, SamplingStrategy::kUniformGrid);
  const auto cb = build_pilot_codebook(4);
  const auto obs = observe_pilots(h, pat, cb, 0.0, 1);
  CHECK(obs.y.rows() == 64);
  CHECK(obs.y.cols() == 4);
  const MatXcd recovered = scatter_rows(obs.y * cb.p.adjoint(), pat.indices, 64);
  CHECK((recovered - h).norm() < 1e-10);
}

TEST_CASE("pilot noise energy matches sigma2") {
  Rng rng(9);
  const MatXcd h = random_channel(64, 2, rng);
  const auto pat = build_sampling_pattern(kGeom, 20, SamplingStrategy::kUniformGrid);
  const auto cb = build_pilot_codebook(2);
  const double sigma2 = 0.3;
  const MatXcd clean = gather_rows(h, pat.indices) * cb.p;
  double acc = 0.0;
  const int draws = 1000;
  for (int d = 0; d < draws; ++d) {
    const auto obs = observe_pilots(h, pat, cb, sigma2, 1000 + static_cast<std::uint64_t>(d));
    acc += (obs.y - clean).squaredNorm();
  }
  CHECK(acc / draws == doctest::Approx(20.0 * 2 * sigma2).epsilon(0.05));
}

TEST_CASE("mask validation") {
  PortMask mask = mask_from_indices(6, {1, 4});
  CHECK(mask.active_count() == 2);
  CHECK_NOTHROW(mask.validate(2));
  CHECK_THROWS(mask.validate(3));
  CHECK_THROWS(mask_from_indices(6, {1, 1}));
  CHECK_THROWS(mask_from_indices(6, {7}));
}

TEST_CASE("scalar MMSE combiner") {
  MatXcd h(3, 1);
  h << Cplx(0, 0), Cplx(2, 0), Cplx(0, 0);
  const auto w = mmse_combiner(mask_from_indices(3, {1}), h, 1.0);
  CHECK(std::abs(w(0, 0) - Cplx(0.4, 0)) < 1e-12);
}

TEST_CASE("single-user SINR equals matched-filter bound") {
  Rng rng(13);
  const MatXcd h = random_channel(16, 1, rng);
  const auto mask = mask_from_indices(16, {2, 7, 11});
  const double sigma2 = 0.5;
  const auto report = sinr_and_rates(mask, h, sigma2);
  const double expect = gather_rows(h, mask.active_indices()).squaredNorm() / sigma2;
  CHECK(report.sinr[0] == doctest::Approx(expect).epsilon(1e-10));
  CHECK(report.rates[0] == doctest::Approx(std::log2(1.0 + expect)).epsilon(1e-10));
}

TEST_CASE("SINR invariant to joint channel/noise rescaling") {
  Rng rng(19);
  const MatXcd h = random_channel(12, 2, rng);
  const auto mask = mask_from_indices(12, {3, 9});
  const auto base = sinr_and_rates(mask, h, 0.2);
  const double c = 7.5;
  const auto scaled = sinr_and_rates(mask, MatXcd(std::sqrt(c) * h), c * 0.2);
  CHECK((base.sinr - scaled.sinr).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("rates are nonnegative on fuzzed instances") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const MatXcd h = random_channel(10, 3, rng);
    const auto mask = mask_from_indices(10, {0, 4, 8});
    const auto report = sinr_and_rates(mask, h, 0.1);
    CHECK(report.rates.minCoeff() >= 0.0);
    CHECK(report.min_rate == doctest::Approx(report.rates.minCoeff()));
  }
}

TEST_CASE("MMSE SINR matches the resolvent identity") {
  Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const MatXcd h = random_channel(12, 2, rng);
    const auto mask = mask_from_indices(12, {5, 10});
    const double sigma2 = 0.3;
    const auto report = sinr_and_rates(mask, h, sigma2);
    const MatXcd heff = gather_rows(h, mask.active_indices());
    const MatXcd inv =
        (MatXcd::Identity(2, 2) + heff.adjoint() * heff / sigma2).inverse();
    for (int u = 0; u < 2; ++u) {
      const double expect = 1.0 / std::real(inv(u, u)) - 1.0;
      CHECK(report.sinr[u] == doctest::Approx(expect).epsilon(1e-9));
    }
  }
}

TEST_CASE("utility matches a from-scratch oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const MatXcd h = random_channel(14, 2, rng);
    const auto mask = mask_from_indices(14, {2, 6, 9});
    const double u = utility(mask, h, 0.15);
    const double oracle = utility_oracle(mask, h, 0.15);
    CHECK(u == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("SINR is invariant to per-column combiner rescaling") {
  Rng rng(37);
  const MatXcd h = random_channel(12, 2, rng);
  const auto mask = mask_from_indices(12, {1, 7});
  const MatXcd heff = gather_rows(h, mask.active_indices());
  const MatXcd w = mmse_combiner(mask, h, 0.2);
  MatXcd w_scaled = w;
  w_scaled.col(0) *= Cplx(2.0, -1.0);
  w_scaled.col(1) *= Cplx(0.0, 3.0);
  const VecXd a = sinr_from_combiner(w, heff, 0.2);
  const VecXd b = sinr_from_combiner(w_scaled, heff, 0.2);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
  const auto report = sinr_and_rates(mask, h, 0.2);
  CHECK((a - report.sinr).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mmse combiner rejects nonpositive noise") {
  Rng rng(41);
  const MatXcd h = random_channel(6, 1, rng);
  CHECK_THROWS(mmse_combiner(mask_from_indices(6, {0}), h, 0.0));
}
