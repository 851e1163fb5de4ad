// Experiment orchestration: configuration, deterministic sweeps over
// (scheme, SNR, delta, trial) grids, CSV metric records, and figure-data
// emission with bootstrap intervals.
#pragma once

#include <filesystem>
#include <optional>

#include "fas/baselines.hpp"
#include "fas/estimator.hpp"
#include "fas/selector.hpp"

namespace fas {

// One evaluated pipeline: an estimator ("true", "ls", "omp", "sbl", "lmmse",
// "flow") optionally followed by a selector ("", "random", "ao",
// "diffusion"). `nfe` overrides the guidance default for flow schemes and is
// part of the scheme identity (so NFE sweeps stay one-row-per-scheme).
struct SchemeSpec {
  std::string estimator;
  std::string selector;
  int nfe = 0;

  std::string label() const;
};

struct ExperimentConfig {
  Geometry geometry{12, 12, 1.375, 1.375};
  int users = 2;
  int rf_chains = 2;
  int n_paths = 8;
  int train_count = 2000;
  std::string dataset_dir;          // generated in-memory when empty
  std::string prior_checkpoint;     // required by flow schemes
  std::string selector_checkpoint;  // required by diffusion selector schemes
  std::vector<SchemeSpec> schemes;
  std::vector<double> snr_db{20.0};
  std::vector<double> deltas{0.25};
  int trials = 20;
  std::uint64_t master_seed = 1;
  std::string out_dir = "sweep_out";
  std::string sampling = "uniform-grid";

  // Flow guidance defaults (paper-scale values; desk profiles override alpha).
  int gd_nfe = 20;
  int gd_n_iter = 3;
  double gd_alpha = 50.0;

  // Dictionary baselines.
  int dict_res = 24;
  int omp_budget = 0;  // 0 -> n_paths

  // Discrete selector.
  int diff_steps = 500;
  int traj_hops = 10;
  std::string schedule = "cosine";

  Json to_json() const;
  static ExperimentConfig from_json(const Json& j);
  std::string hash() const;  // FNV-1a over the canonical JSON dump
};

struct MetricRow {
  std::string scheme;
  std::string estimator;
  std::string selector;
  double snr_db = 0.0;
  double delta = 0.0;
  int nfe = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double nmse = std::numeric_limits<double>::quiet_NaN();
  double min_rate = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
  std::string error;
  double wall_ms = 0.0;  // written to the timings sidecar, not metrics.csv
};

// ||h_est - h_true||_F^2 / ||h_true||_F^2.
double nmse(const MatXcd& h_est, const MatXcd& h_true);

struct SweepResult {
  std::vector<MetricRow> rows;
  std::filesystem::path metrics_csv;
  std::filesystem::path timings_csv;
};

// Runs every (scheme, snr, delta, trial) cell with shared per-trial seeds for
// channel, pattern, and noise so schemes see identical observations.
// Component failures are recorded per row and the sweep continues.
SweepResult run_sweep(const ExperimentConfig& config);

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

struct FigureSeriesPoint {
  std::string series;
  double x = 0.0;
  double mean = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  int n = 0;
};

// Writes fig_nmse_vs_nfe / fig_nmse_vs_snr / fig_nmse_vs_delta /
// fig_minrate_vs_snr tables (x, mean, bootstrap 95% interval). Throws before
// writing anything if the input rows are empty or a figure has no series.
std::vector<std::filesystem::path> emit_figures(const std::vector<MetricRow>& rows,
                                                const std::filesystem::path& out_dir,
                                                std::uint64_t bootstrap_seed = 7);

// Percentile bootstrap of the mean (B = 1000).
std::pair<double, double> bootstrap_mean_interval(const std::vector<double>& values,
                                                  std::uint64_t seed, int resamples = 1000);

}  // namespace fas
