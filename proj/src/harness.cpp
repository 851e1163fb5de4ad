#include "fas/harness.hpp"

#include "fas/io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace fas {

std::string SchemeSpec::label() const {
  std::string s = estimator;
  if (!selector.empty()) s += "+" + selector;
  if (nfe > 0) s += "@nfe" + std::to_string(nfe);
  return s;
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["geometry"] = {{"nx", geometry.nx}, {"ny", geometry.ny}, {"wx", geometry.wx}, {"wy", geometry.wy}};
  j["users"] = users;
  j["rf_chains"] = rf_chains;
  j["n_paths"] = n_paths;
  j["train_count"] = train_count;
  j["dataset_dir"] = dataset_dir;
  j["prior_checkpoint"] = prior_checkpoint;
  j["selector_checkpoint"] = selector_checkpoint;
  Json sj = Json::array();
  for (const auto& s : schemes)
    sj.push_back({{"estimator", s.estimator}, {"selector", s.selector}, {"nfe", s.nfe}});
  j["schemes"] = sj;
  j["snr_db"] = snr_db;
  j["deltas"] = deltas;
  j["trials"] = trials;
  j["master_seed"] = master_seed;
  j["out_dir"] = out_dir;
  j["sampling"] = sampling;
  j["guidance"] = {{"nfe", gd_nfe}, {"n_iter", gd_n_iter}, {"alpha", gd_alpha}};
  j["dict_res"] = dict_res;
  j["omp_budget"] = omp_budget;
  j["diff_steps"] = diff_steps;
  j["traj_hops"] = traj_hops;
  j["schedule"] = schedule;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  ExperimentConfig c;
  if (j.contains("geometry"))
    c.geometry = {j["geometry"].value("nx", c.geometry.nx), j["geometry"].value("ny", c.geometry.ny),
                  j["geometry"].value("wx", c.geometry.wx), j["geometry"].value("wy", c.geometry.wy)};
  c.users = j.value("users", c.users);
  c.rf_chains = j.value("rf_chains", c.rf_chains);
  c.n_paths = j.value("n_paths", c.n_paths);
  c.train_count = j.value("train_count", c.train_count);
  c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
  c.prior_checkpoint = j.value("prior_checkpoint", c.prior_checkpoint);
  c.selector_checkpoint = j.value("selector_checkpoint", c.selector_checkpoint);
  if (j.contains("schemes")) {
    c.schemes.clear();
    for (const auto& s : j["schemes"])
      c.schemes.push_back({s.value("estimator", ""), s.value("selector", ""), s.value("nfe", 0)});
  }
  if (j.contains("snr_db")) c.snr_db = j["snr_db"].get<std::vector<double>>();
  if (j.contains("deltas")) c.deltas = j["deltas"].get<std::vector<double>>();
  c.trials = j.value("trials", c.trials);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.sampling = j.value("sampling", c.sampling);
  if (j.contains("guidance")) {
    c.gd_nfe = j["guidance"].value("nfe", c.gd_nfe);
    c.gd_n_iter = j["guidance"].value("n_iter", c.gd_n_iter);
    c.gd_alpha = j["guidance"].value("alpha", c.gd_alpha);
  }
  c.dict_res = j.value("dict_res", c.dict_res);
  c.omp_budget = j.value("omp_budget", c.omp_budget);
  c.diff_steps = j.value("diff_steps", c.diff_steps);
  c.traj_hops = j.value("traj_hops", c.traj_hops);
  c.schedule = j.value("schedule", c.schedule);
  return c;
}

std::string ExperimentConfig::hash() const {
  Json j = to_json();
  j.erase("out_dir");  // output location is not part of the experiment identity
  const std::string dump = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double nmse(const MatXcd& h_est, const MatXcd& h_true) {
  if (h_est.rows() != h_true.rows() || h_est.cols() != h_true.cols())
    throw std::invalid_argument("nmse: shape mismatch");
  const double denom = h_true.squaredNorm();
  if (!(denom > 0.0)) throw std::invalid_argument("nmse: zero-norm reference");
  return (h_est - h_true).squaredNorm() / denom;
}

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct SweepContext {
  ExperimentConfig cfg;
  Dataset train;
  std::optional<CovariancePrior> covariance;
  std::optional<AngularDictionary> dictionary;
  std::optional<VelocityNetwork> prior;
  std::optional<DenoiserNetwork> selector_net;
  std::optional<DiffusionSchedule> dsched;
  std::optional<SamplerTrajectory> traj;
  PilotCodebook codebook;
};

MatXcd draw_trial_channel(const SweepContext& ctx, int trial) {
  const int n = ctx.cfg.geometry.ports();
  MatXcd channel(n, ctx.cfg.users);
  for (int k = 0; k < ctx.cfg.users; ++k)
    channel.col(k) = sample_new_channel(
        ctx.train, derive_seed(ctx.cfg.master_seed,
                               0xC0000000ULL + static_cast<std::uint64_t>(trial) * 64 + k));
  return channel;
}

MatXcd run_estimator(const SweepContext& ctx, const SchemeSpec& scheme, const MatXcd& truth,
                     const PilotObservation& obs, int trial) {
  const auto& cfg = ctx.cfg;
  if (scheme.estimator == "true") return truth;
  if (scheme.estimator == "ls") return ls_full(obs.y, obs.codebook, obs.pattern);
  if (scheme.estimator == "flow") {
    if (!ctx.prior) throw std::runtime_error("flow scheme requires prior_checkpoint");
    GuidanceConfig g;
    g.nfe = scheme.nfe > 0 ? scheme.nfe : cfg.gd_nfe;
    g.n_iter = cfg.gd_n_iter;
    g.alpha = cfg.gd_alpha;
    g.seed = derive_seed(cfg.master_seed, 0xF0000000ULL + static_cast<std::uint64_t>(trial));
    return estimate_channels(obs, *ctx.prior, g);
  }

  const MatXcd per_user = decouple_users(obs.y, obs.codebook);
  MatXcd est(obs.pattern.n_ports, per_user.cols());
  for (Eigen::Index k = 0; k < per_user.cols(); ++k) {
    const VecXcd y = per_user.col(k);
    if (scheme.estimator == "omp") {
      OmpConfig oc;
      oc.sparsity_budget = cfg.omp_budget > 0 ? cfg.omp_budget : cfg.n_paths;
      est.col(k) = omp_estimate(y, obs.pattern, *ctx.dictionary, oc);
    } else if (scheme.estimator == "sbl") {
      est.col(k) = sbl_estimate(y, obs.pattern, *ctx.dictionary, obs.sigma2, SblConfig{}).h;
    } else if (scheme.estimator == "lmmse") {
      est.col(k) = lmmse_estimate(y, obs.pattern, *ctx.covariance, obs.sigma2);
    } else {
      throw std::runtime_error("unknown estimator: " + scheme.estimator);
    }
  }
  return est;
}

double run_selector(const SweepContext& ctx, const SchemeSpec& scheme, const MatXcd& estimate,
                    const MatXcd& truth, double sigma2, int trial) {
  const auto& cfg = ctx.cfg;
  const int n = cfg.geometry.ports();
  const std::uint64_t seed =
      derive_seed(cfg.master_seed, 0xAB000000ULL + static_cast<std::uint64_t>(trial));
  PortMask mask;
  if (scheme.selector == "random") {
    mask = random_select(n, cfg.rf_chains, seed);
  } else if (scheme.selector == "ao") {
    mask = ao_solve(estimate, sigma2, cfg.rf_chains, seed).mask;
  } else if (scheme.selector == "diffusion") {
    if (!ctx.selector_net) throw std::runtime_error("diffusion scheme requires selector_checkpoint");
    mask = select_ports(*ctx.selector_net, estimate, *ctx.dsched, *ctx.traj, cfg.rf_chains, seed);
  } else {
    throw std::runtime_error("unknown selector: " + scheme.selector);
  }
  // Deployment utility is always measured against the true channel.
  return utility(mask, truth, sigma2);
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config) {
  config.geometry.validate();
  if (config.schemes.empty() || config.snr_db.empty() || config.deltas.empty() ||
      config.trials < 1)
    throw std::invalid_argument("run_sweep: schemes, snr, delta, trials must be non-empty");

  SweepContext ctx{config, {}, {}, {}, {}, {}, {}, {}, build_pilot_codebook(config.users)};
  if (!config.dataset_dir.empty() && std::filesystem::exists(
                                         std::filesystem::path(config.dataset_dir) / "manifest.json")) {
    ctx.train = load_dataset(config.dataset_dir);
    if (!(ctx.train.geometry == config.geometry))
      throw std::runtime_error("run_sweep: dataset geometry mismatch");
  } else {
    ctx.train = generate_dataset(config.geometry, config.n_paths, config.train_count,
                                 derive_seed(config.master_seed, 0x7A17));
    if (!config.dataset_dir.empty()) save_dataset(ctx.train, config.dataset_dir);
  }

  bool need_cov = false, need_dict = false, need_flow = false, need_diff = false;
  for (const auto& s : config.schemes) {
    need_cov |= s.estimator == "lmmse";
    need_dict |= s.estimator == "omp" || s.estimator == "sbl";
    need_flow |= s.estimator == "flow";
    need_diff |= s.selector == "diffusion";
  }
  if (need_cov) ctx.covariance = empirical_covariance(ctx.train);
  if (need_dict) ctx.dictionary = build_angular_dictionary(config.geometry, config.dict_res);
  if (need_flow) ctx.prior = VelocityNetwork::load(config.prior_checkpoint);
  if (need_diff) {
    ctx.selector_net = DenoiserNetwork::load(config.selector_checkpoint);
    ctx.dsched = config.schedule == "linear" ? linear_schedule(config.diff_steps)
                                             : cosine_schedule(config.diff_steps);
    ctx.traj = uniform_trajectory(config.diff_steps, config.traj_hops);
  }

  const int n = config.geometry.ports();
  const std::string config_hash = config.hash();
  const std::size_t n_cells = config.schemes.size() * config.snr_db.size() *
                              config.deltas.size() * static_cast<std::size_t>(config.trials);
  std::vector<MetricRow> rows(n_cells);

  // Flat index: (((scheme * snr) + s) * delta + d) * trials + trial.
  parallel_for(n_cells, [&](std::size_t cell) {
    std::size_t rest = cell;
    const int trial = static_cast<int>(rest % static_cast<std::size_t>(config.trials));
    rest /= static_cast<std::size_t>(config.trials);
    const std::size_t di = rest % config.deltas.size();
    rest /= config.deltas.size();
    const std::size_t si = rest % config.snr_db.size();
    const std::size_t ki = rest / config.snr_db.size();
    const SchemeSpec& scheme = config.schemes[ki];

    MetricRow row;
    row.scheme = scheme.label();
    row.estimator = scheme.estimator;
    row.selector = scheme.selector;
    row.snr_db = config.snr_db[si];
    row.delta = config.deltas[di];
    row.nfe = scheme.nfe;
    row.trial = trial;
    row.seed = derive_seed(config.master_seed, 0x11000000ULL + static_cast<std::uint64_t>(trial));

    const auto t0 = std::chrono::steady_clock::now();
    try {
      const double sigma2 = NoiseModel::from_snr_db(row.snr_db).sigma2;
      const MatXcd truth = draw_trial_channel(ctx, trial);
      const int n_obs = std::max(1, std::min(n, static_cast<int>(std::lround(row.delta * n))));
      const SamplingPattern pattern = build_sampling_pattern(
          config.geometry, n_obs, sampling_strategy_from_string(config.sampling),
          derive_seed(config.master_seed, 0xD0000000ULL + static_cast<std::uint64_t>(trial)));
      const PilotObservation obs = observe_pilots(
          truth, pattern, ctx.codebook, sigma2,
          derive_seed(config.master_seed, 0xE0000000ULL + static_cast<std::uint64_t>(trial)));

      const MatXcd estimate = run_estimator(ctx, scheme, truth, obs, trial);
      row.nmse = nmse(estimate, truth);
      if (!scheme.selector.empty())
        row.min_rate = run_selector(ctx, scheme, estimate, truth, sigma2, trial);
    } catch (const std::exception& e) {
      row.status = "error";
      row.error = e.what();
      row.nmse = std::numeric_limits<double>::quiet_NaN();
      row.min_rate = std::numeric_limits<double>::quiet_NaN();
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    rows[cell] = std::move(row);
  });

  std::filesystem::create_directories(config.out_dir);
  SweepResult result;
  result.metrics_csv = std::filesystem::path(config.out_dir) / "metrics.csv";
  result.timings_csv = std::filesystem::path(config.out_dir) / "timings.csv";

  std::ofstream mf(result.metrics_csv, std::ios::trunc);
  mf << "scheme,estimator,selector,snr_db,delta,nfe,trial,seed,nmse,min_rate,status,error,config_hash\n";
  std::ofstream tf(result.timings_csv, std::ios::trunc);
  tf << "row,wall_ms\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    mf << r.scheme << ',' << r.estimator << ',' << r.selector << ',' << fmt_double(r.snr_db)
       << ',' << fmt_double(r.delta) << ',' << r.nfe << ',' << r.trial << ',' << r.seed << ','
       << fmt_double(r.nmse) << ',' << fmt_double(r.min_rate) << ',' << r.status << ','
       << r.error << ',' << config_hash << '\n';
    tf << i << ',' << fmt_double(r.wall_ms) << '\n';
  }
  mf.close();
  tf.close();
  write_json_file(std::filesystem::path(config.out_dir) / "config.json", config.to_json());

  result.rows = std::move(rows);
  return result;
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open metrics csv: " + path.string());
  std::string line;
  std::getline(f, line);  // header
  std::vector<MetricRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) parts.push_back(tok);
    while (parts.size() < 13) parts.emplace_back();
    MetricRow r;
    r.scheme = parts[0];
    r.estimator = parts[1];
    r.selector = parts[2];
    r.snr_db = parts[3].empty() ? 0.0 : std::stod(parts[3]);
    r.delta = parts[4].empty() ? 0.0 : std::stod(parts[4]);
    r.nfe = std::stoi(parts[5]);
    r.trial = std::stoi(parts[6]);
    r.seed = std::stoull(parts[7]);
    r.nmse = parts[8].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(parts[8]);
    r.min_rate = parts[9].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(parts[9]);
    r.status = parts[10];
    r.error = parts[11];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::pair<double, double> bootstrap_mean_interval(const std::vector<double>& values,
                                                  std::uint64_t seed, int resamples) {
  if (values.empty()) throw std::invalid_argument("bootstrap_mean_interval: empty sample");
  Rng rng(seed);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
      sum += values[rng.uniform_int(values.size())];
    means[static_cast<std::size_t>(b)] = sum / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const auto pick = [&](double q) {
    const double pos = q * (resamples - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return means[lo] * (1.0 - frac) + means[std::min<std::size_t>(lo + 1, means.size() - 1)] * frac;
  };
  return {pick(0.025), pick(0.975)};
}

std::vector<std::filesystem::path> emit_figures(const std::vector<MetricRow>& rows,
                                                const std::filesystem::path& out_dir,
                                                std::uint64_t bootstrap_seed) {
  if (rows.empty()) throw std::invalid_argument("emit_figures: no metric rows");

  struct FigureSpec {
    std::string name;
    std::function<bool(const MetricRow&)> filter;
    std::function<double(const MetricRow&)> x;
    std::function<double(const MetricRow&)> y;
  };
  const std::vector<FigureSpec> specs = {
      {"nmse_vs_nfe",
       [](const MetricRow& r) { return r.status == "ok" && r.nfe > 0 && !std::isnan(r.nmse); },
       [](const MetricRow& r) { return static_cast<double>(r.nfe); },
       [](const MetricRow& r) { return r.nmse; }},
      {"nmse_vs_snr",
       [](const MetricRow& r) { return r.status == "ok" && !std::isnan(r.nmse); },
       [](const MetricRow& r) { return r.snr_db; },
       [](const MetricRow& r) { return r.nmse; }},
      {"nmse_vs_delta",
       [](const MetricRow& r) { return r.status == "ok" && !std::isnan(r.nmse); },
       [](const MetricRow& r) { return r.delta; },
       [](const MetricRow& r) { return r.nmse; }},
      {"minrate_vs_snr",
       [](const MetricRow& r) { return r.status == "ok" && !r.selector.empty() && !std::isnan(r.min_rate); },
       [](const MetricRow& r) { return r.snr_db; },
       [](const MetricRow& r) { return r.min_rate; }},
  };

  // Build all tables before writing anything.
  std::vector<std::pair<std::string, std::vector<FigureSeriesPoint>>> tables;
  for (const auto& spec : specs) {
    std::map<std::pair<std::string, double>, std::vector<double>> groups;
    for (const auto& r : rows)
      if (spec.filter(r)) groups[{r.scheme, spec.x(r)}].push_back(spec.y(r));
    if (groups.empty()) continue;  // figure not applicable to this sweep
    std::vector<FigureSeriesPoint> pts;
    std::uint64_t gi = 0;
    for (const auto& [key, vals] : groups) {
      FigureSeriesPoint p;
      p.series = key.first;
      p.x = key.second;
      double sum = 0.0;
      for (double v : vals) sum += v;
      p.mean = sum / static_cast<double>(vals.size());
      std::tie(p.lo95, p.hi95) = bootstrap_mean_interval(vals, derive_seed(bootstrap_seed, gi++));
      p.n = static_cast<int>(vals.size());
      pts.push_back(std::move(p));
    }
    tables.emplace_back(spec.name, std::move(pts));
  }
  if (tables.empty())
    throw std::runtime_error("emit_figures: no figure has any usable series");

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [name, pts] : tables) {
    const auto path = out_dir / ("fig_" + name + ".csv");
    std::ofstream f(path, std::ios::trunc);
    f << "series,x,mean,lo95,hi95,n\n";
    for (const auto& p : pts)
      f << p.series << ',' << fmt_double(p.x) << ',' << fmt_double(p.mean) << ','
        << fmt_double(p.lo95) << ',' << fmt_double(p.hi95) << ',' << p.n << '\n';
    written.push_back(path);
  }
  return written;
}

}  // namespace fas
