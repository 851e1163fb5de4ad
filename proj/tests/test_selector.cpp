#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fas/selector.hpp"

using namespace fas;

namespace {

MatXcd random_cmat(int r, int c, Rng& rng) {
  MatXcd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.normal_complex();
  return m;
}

struct StubDenoiser : DenoiserModel {
  VecXd probs;
  VecXd clean_prob(const Mask&, int, const MatXcd&) const override { return probs; }
  int ports() const override { return static_cast<int>(probs.size()); }
};

}  // namespace

TEST_CASE("ao solve: feasibility, monotone trace, one-swap local optimality") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const MatXcd channel = random_cmat(16, 2, rng);
    const auto result = ao_solve(channel, 0.1, 3, 100 + static_cast<std::uint64_t>(trial));
    result.mask.validate(3);
    for (std::size_t i = 1; i < result.trace.size(); ++i)
      CHECK(result.trace[i] >= result.trace[i - 1]);
    CHECK(result.utility ==
          doctest::Approx(utility(result.mask, channel, 0.1)).epsilon(1e-12));

    // Explicit exchange scan: no single active/inactive swap improves.
    const auto active = result.mask.active_indices();
    for (int a : active)
      for (int cand = 0; cand < 16; ++cand) {
        if (result.mask.x[static_cast<std::size_t>(cand)]) continue;
        auto swapped = active;
        std::replace(swapped.begin(), swapped.end(), a, cand);
        CHECK(utility(mask_from_indices(16, swapped), channel, 0.1) <= result.utility + 1e-12);
      }
  }
}

TEST_CASE("ao never beats the exhaustive oracle and often matches it") {
  Rng rng(5);
  int matches = 0;
  const int trials = 30;
  for (int trial = 0; trial < trials; ++trial) {
    const MatXcd channel = random_cmat(12, 2, rng);
    const auto ao = ao_solve(channel, 0.1, 2, 500 + static_cast<std::uint64_t>(trial));
    const auto oracle = brute_force_oracle(channel, 0.1, 2);
    CHECK(ao.utility <= oracle.utility + 1e-12);
    if (ao.utility >= oracle.utility - 1e-9) ++matches;
  }
  CHECK(matches > 0);  // the heuristic finds the optimum in a recorded fraction
  MESSAGE("ao matched the oracle on ", matches, "/", trials, " instances");
}

TEST_CASE("brute force basics") {
  Rng rng(7);
  const MatXcd channel = random_cmat(6, 2, rng);

  const auto all = brute_force_oracle(channel, 0.2, 6);
  CHECK(all.mask.active_count() == 6);

  const auto best = brute_force_oracle(channel, 0.2, 2);
  // Enumeration is its own certificate: check every mask explicitly.
  std::vector<std::vector<int>> combos;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) combos.push_back({i, j});
  CHECK(combos.size() == 15);
  for (const auto& c : combos)
    CHECK(best.utility >= utility(mask_from_indices(6, c), channel, 0.2) - 1e-12);

  CHECK_THROWS(brute_force_oracle(random_cmat(200, 1, rng), 0.1, 10));
}

TEST_CASE("single-user optimum is the top-M magnitude set") {
  Rng rng(9);
  const MatXcd channel = random_cmat(12, 1, rng);
  const auto best = brute_force_oracle(channel, 0.3, 3);
  std::vector<int> idx(12);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return std::norm(channel(a, 0)) > std::norm(channel(b, 0));
  });
  std::vector<int> top(idx.begin(), idx.begin() + 3);
  std::sort(top.begin(), top.end());
  CHECK(best.mask.active_indices() == top);
}

TEST_CASE("brute force is permutation equivariant") {
  Rng rng(11);
  const MatXcd channel = random_cmat(8, 2, rng);
  const auto base = brute_force_oracle(channel, 0.15, 2);

  std::vector<int> perm{3, 6, 0, 7, 2, 5, 1, 4};
  MatXcd permuted(8, 2);
  for (int i = 0; i < 8; ++i) permuted.row(perm[static_cast<std::size_t>(i)]) = channel.row(i);
  const auto moved = brute_force_oracle(permuted, 0.15, 2);

  std::vector<int> expect;
  for (int i : base.mask.active_indices()) expect.push_back(perm[static_cast<std::size_t>(i)]);
  std::sort(expect.begin(), expect.end());
  CHECK(moved.mask.active_indices() == expect);
  CHECK(moved.utility == doctest::Approx(base.utility).epsilon(1e-12));
}

TEST_CASE("random selection is uniform and feasible") {
  for (int trial = 0; trial < 50; ++trial)
    random_select(20, 4, static_cast<std::uint64_t>(trial)).validate(4);
  CHECK(random_select(5, 5, 1).active_count() == 5);

  const int draws = 100000;
  std::vector<int> hits(10, 0);
  for (int d = 0; d < draws; ++d) {
    const auto mask = random_select(10, 3, 1000 + static_cast<std::uint64_t>(d));
    for (int i : mask.active_indices()) ++hits[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < 10; ++i)
    CHECK(static_cast<double>(hits[static_cast<std::size_t>(i)]) / draws ==
          doctest::Approx(0.3).epsilon(0.02));
}

TEST_CASE("sl dataset construction: determinism, consistency, label quality") {
  const Geometry g{4, 4, 0.75, 0.75};
  const Dataset ds = generate_dataset(g, 4, 200, 31);
  const double sigma2_ref = 0.1;
  const auto a = build_sl_dataset(ds, 2, 2, sigma2_ref, 20, 7);
  const auto b = build_sl_dataset(ds, 2, 2, sigma2_ref, 20, 7);
  REQUIRE(a.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label.x == b[i].label.x);
    CHECK(a[i].utility == b[i].utility);
    a[i].label.validate(2);
    CHECK(a[i].utility ==
          doctest::Approx(utility(a[i].label, a[i].channel, sigma2_ref)).epsilon(1e-9));
  }

  double label_mean = 0.0, random_mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    label_mean += a[i].utility;
    random_mean += utility(random_select(16, 2, 900 + i), a[i].channel, sigma2_ref);
  }
  CHECK(label_mean > random_mean);
}

TEST_CASE("sl dataset disk round trip") {
  const Geometry g{4, 4, 0.75, 0.75};
  const Dataset ds = generate_dataset(g, 4, 100, 37);
  const auto instances = build_sl_dataset(ds, 2, 2, 0.1, 8, 11);
  const auto dir = std::filesystem::temp_directory_path() / "fas_test_sl";
  std::filesystem::remove_all(dir);
  save_sl_dataset(instances, g, dir);
  Geometry g2;
  const auto back = load_sl_dataset(dir, &g2);
  REQUIRE(back.size() == instances.size());
  CHECK(g2 == g);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].label.x == instances[i].label.x);
    CHECK(back[i].utility == instances[i].utility);
    CHECK(back[i].sigma2_ref == instances[i].sigma2_ref);
    // float32 storage of float32-valued channels is lossless.
    CHECK((back[i].channel - instances[i].channel).norm() == 0.0);
    CHECK(back[i].utility ==
          doctest::Approx(utility(back[i].label, back[i].channel, back[i].sigma2_ref))
              .epsilon(1e-9));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("uniform trajectory endpoints and monotonicity") {
  const auto traj = uniform_trajectory(500, 10);
  CHECK(traj.taus.front() == 0);
  CHECK(traj.taus.back() == 500);
  CHECK(traj.hops() == 10);
  const auto dense = uniform_trajectory(16, 16);
  for (int i = 0; i <= 16; ++i) CHECK(dense.taus[static_cast<std::size_t>(i)] == i);
  CHECK_THROWS(uniform_trajectory(10, 11));
}

TEST_CASE("select_ports always emits feasible masks") {
  const auto sched = cosine_schedule(60);
  const auto traj = uniform_trajectory(60, 6);
  StubDenoiser stub;
  Rng rng(13);
  const MatXcd chan = MatXcd::Zero(24, 1);
  for (int trial = 0; trial < 10000; ++trial) {
    if (trial % 100 == 0) {
      stub.probs = VecXd::Zero(24);
      for (int i = 0; i < 24; ++i) stub.probs[i] = rng.uniform(0.05, 0.95);
    }
    select_ports(stub, chan, sched, traj, 4, static_cast<std::uint64_t>(trial)).validate(4);
  }
}

TEST_CASE("select_ports determinism and point-mass reproduction") {
  const auto sched = cosine_schedule(40);
  StubDenoiser stub;
  stub.probs = VecXd::Zero(12);
  stub.probs << 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0;  // point mass on {1, 4, 8}
  const MatXcd chan = MatXcd::Zero(12, 1);

  for (int hops : {40, 5}) {  // full chain and skipped
    const auto traj = uniform_trajectory(40, hops);
    const auto mask = select_ports(stub, chan, sched, traj, 3, 99);
    CHECK(mask.active_indices() == std::vector<int>{1, 4, 8});
    const auto again = select_ports(stub, chan, sched, traj, 3, 99);
    CHECK(mask.x == again.x);
  }

  // Ties broken by ascending port index.
  StubDenoiser flat;
  flat.probs = VecXd::Constant(12, 0.5);
  const auto traj = uniform_trajectory(40, 4);
  const auto mask = select_ports(flat, chan, sched, traj, 3, 1);
  CHECK(mask.active_indices() == std::vector<int>{0, 1, 2});
}

TEST_CASE("sl training drives the bce loss down") {
  const Geometry g{4, 4, 0.75, 0.75};
  const Dataset ds = generate_dataset(g, 4, 300, 41);
  const auto instances = build_sl_dataset(ds, 2, 2, 0.1, 64, 17);
  const auto sched = cosine_schedule(50);
  DenoiserNetwork net(g, 2, {8, 16, 32}, 32, 9);
  SlHyper hyper;
  hyper.batch = 16;
  hyper.lr = 1e-3;
  hyper.epochs = 30;
  hyper.seed = 19;
  const auto report = sl_train(net, instances, sched, hyper);
  REQUIRE(report.epoch_loss.size() == 30);
  CHECK(report.epoch_loss.back() <= 0.6 * report.epoch_loss.front());
}

TEST_CASE("rl skips instances whose baseline is unbeatable") {
  const Geometry g{4, 4, 0.75, 0.75};
  const Dataset ds = generate_dataset(g, 4, 100, 43);
  auto instances = build_sl_dataset(ds, 2, 2, 0.1, 4, 23);
  for (auto& inst : instances) inst.utility = 1e9;  // nothing can beat this baseline

  const auto sched = cosine_schedule(50);
  DenoiserNetwork net(g, 2, {8, 16, 32}, 32, 9);
  const std::vector<float> before(net.net().params(), net.net().params() + net.net().param_count());
  RlHyper hyper;
  hyper.candidates = 4;
  hyper.epochs = 2;
  hyper.seed = 29;
  hyper.traj_hops = 5;
  const auto report = rl_finetune(net, instances, sched, hyper);
  CHECK(report.updates == 0);
  CHECK(report.skipped == 8);
  const std::vector<float> after(net.net().params(), net.net().params() + net.net().param_count());
  CHECK(before == after);
}

TEST_CASE("trained single-user selector approximates the magnitude oracle") {
  // K=1 toy: the optimum is the top-M |h| set; the conditional denoiser
  // trained on AO labels should usually find it.
  const Geometry g{4, 4, 0.75, 0.75};
  const Dataset ds = generate_dataset(g, 3, 1500, 47);
  const double sigma2_ref = 0.1;
  const auto instances = build_sl_dataset(ds, 1, 2, sigma2_ref, 400, 53);
  const auto sched = cosine_schedule(100);
  DenoiserNetwork net(g, 1, {16, 32, 64}, 64, 59);
  SlHyper hyper;
  hyper.batch = 16;
  hyper.lr = 1e-3;
  hyper.epochs = 60;
  hyper.seed = 61;
  sl_train(net, instances, sched, hyper);

  const auto traj = uniform_trajectory(100, 10);
  int hits = 0;
  const int tests = 200;
  for (int trial = 0; trial < tests; ++trial) {
    const VecXcd h = sample_new_channel(ds, derive_seed(67, static_cast<std::uint64_t>(trial)));
    MatXcd chan(16, 1);
    chan.col(0) = h;
    const auto mask = select_ports(net, chan, sched, traj, 2, derive_seed(71, static_cast<std::uint64_t>(trial)));
    std::vector<int> idx(16);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return std::norm(h[a]) > std::norm(h[b]); });
    std::vector<int> top{idx[0], idx[1]};
    std::sort(top.begin(), top.end());
    if (mask.active_indices() == top) ++hits;
  }
  MESSAGE("top-M agreement: ", hits, "/", tests);
  CHECK(hits >= 160);
}
