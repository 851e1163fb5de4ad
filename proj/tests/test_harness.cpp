#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "fas/harness.hpp"

using namespace fas;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

ExperimentConfig small_config(const std::string& out) {
  ExperimentConfig cfg;
  cfg.geometry = {6, 6, 1.25, 1.25};
  cfg.users = 2;
  cfg.rf_chains = 2;
  cfg.n_paths = 4;
  cfg.train_count = 200;
  cfg.schemes = {{"lmmse", "", 0}, {"lmmse", "ao", 0}, {"lmmse", "random", 0}};
  cfg.snr_db = {10.0, 20.0};
  cfg.deltas = {0.25};
  cfg.trials = 4;
  cfg.master_seed = 5;
  cfg.out_dir = out;
  cfg.dict_res = 8;
  return cfg;
}

}  // namespace

TEST_CASE("nmse identities") {
  Rng rng(3);
  MatXcd h(4, 2);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 4; ++i) h(i, j) = rng.normal_complex();
  CHECK(nmse(h, h) == 0.0);
  CHECK(nmse(MatXcd::Zero(4, 2), h) == doctest::Approx(1.0));
  CHECK(nmse(MatXcd(2.0 * h), h) == doctest::Approx(1.0));
  CHECK_THROWS(nmse(h, MatXcd::Zero(4, 2)));
}

TEST_CASE("config json round trip and stable hash") {
  const ExperimentConfig cfg = small_config("x");
  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.hash() == cfg.hash());
  ExperimentConfig other = cfg;
  other.trials = 5;
  CHECK(other.hash() != cfg.hash());
}

TEST_CASE("sweep rows, determinism, and identical-observation pairing") {
  const auto dir = std::filesystem::temp_directory_path() / "fas_test_sweep_a";
  const auto dir2 = std::filesystem::temp_directory_path() / "fas_test_sweep_b";
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);

  ExperimentConfig cfg = small_config(dir.string());
  const SweepResult a = run_sweep(cfg);
  CHECK(a.rows.size() == 3 * 2 * 1 * 4);  // schemes * snr * delta * trials

  for (const auto& r : a.rows) CHECK(r.status == "ok");

  // Same estimator rows across selectors share observations, so NMSE pairs up.
  std::map<std::tuple<double, double, int>, std::vector<double>> nmse_by_trial;
  for (const auto& r : a.rows) nmse_by_trial[{r.snr_db, r.delta, r.trial}].push_back(r.nmse);
  for (const auto& [key, v] : nmse_by_trial)
    for (double x : v) CHECK(x == doctest::Approx(v.front()).epsilon(1e-12));

  cfg.out_dir = dir2.string();
  const SweepResult b = run_sweep(cfg);
  CHECK(slurp(a.metrics_csv) == slurp(b.metrics_csv));

  // Round trip through the CSV reader.
  const auto parsed = read_metrics_csv(a.metrics_csv);
  REQUIRE(parsed.size() == a.rows.size());
  CHECK(parsed[0].scheme == a.rows[0].scheme);
  CHECK(parsed[0].nmse == doctest::Approx(a.rows[0].nmse).epsilon(1e-10));

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("component failures are recorded per trial and the sweep continues") {
  const auto dir = std::filesystem::temp_directory_path() / "fas_test_sweep_err";
  std::filesystem::remove_all(dir);
  ExperimentConfig cfg = small_config(dir.string());
  cfg.schemes = {{"ls", "", 0}, {"lmmse", "", 0}};
  cfg.deltas = {0.5};  // ls requires full observation -> per-trial error rows
  const SweepResult result = run_sweep(cfg);
  int errors = 0, ok = 0;
  for (const auto& r : result.rows) {
    if (r.status == "error") {
      ++errors;
      CHECK(r.estimator == "ls");
      CHECK(!r.error.empty());
    } else {
      ++ok;
    }
  }
  CHECK(errors == 2 * 4);
  CHECK(ok == 2 * 4);
  std::filesystem::remove_all(dir);
}

TEST_CASE("figure emission: intervals, independent mean recomputation") {
  const auto dir = std::filesystem::temp_directory_path() / "fas_test_fig";
  std::filesystem::remove_all(dir);
  ExperimentConfig cfg = small_config((dir / "sweep").string());
  cfg.trials = 6;
  const SweepResult sweep = run_sweep(cfg);
  const auto figs = emit_figures(sweep.rows, dir / "figs");
  CHECK(!figs.empty());

  // Independent aggregation: recompute group means straight from the rows.
  for (const auto& fig : figs) {
    std::ifstream f(fig);
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      std::stringstream ss(line);
      std::string series, xs, means, los, his, ns;
      std::getline(ss, series, ',');
      std::getline(ss, xs, ',');
      std::getline(ss, means, ',');
      std::getline(ss, los, ',');
      std::getline(ss, his, ',');
      std::getline(ss, ns, ',');
      const double x = std::stod(xs), mean = std::stod(means);
      const double lo = std::stod(los), hi = std::stod(his);
      CHECK(lo <= mean + 1e-12);
      CHECK(hi >= mean - 1e-12);

      const bool minrate = fig.filename().string().find("minrate") != std::string::npos;
      const bool vs_delta = fig.filename().string().find("delta") != std::string::npos;
      double sum = 0.0;
      int n = 0;
      for (const auto& r : sweep.rows) {
        if (r.scheme != series) continue;
        const double rx = vs_delta ? r.delta : r.snr_db;
        if (std::abs(rx - x) > 1e-12) continue;
        const double y = minrate ? r.min_rate : r.nmse;
        if (std::isnan(y)) continue;
        sum += y;
        ++n;
      }
      REQUIRE(n == std::stoi(ns));
      CHECK(mean == doctest::Approx(sum / n).epsilon(1e-12));
    }
  }

  CHECK_THROWS(emit_figures({}, dir / "never"));
  CHECK(!std::filesystem::exists(dir / "never"));
  std::filesystem::remove_all(dir);
}
