// Command-line front end: dataset generation, prior/selector training,
// one-shot estimation and selection, metric sweeps, and figure emission.
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "fas/harness.hpp"
#include "fas/io.hpp"

namespace {

std::uint64_t master_seed_default() {
  if (const char* env = std::getenv("FAS_MASTER_SEED"); env != nullptr && *env != '\0')
    return std::strtoull(env, nullptr, 10);
  return 1;
}

std::array<int, 3> parse_widths(const std::string& s) {
  std::array<int, 3> w{};
  if (std::sscanf(s.c_str(), "%d,%d,%d", &w[0], &w[1], &w[2]) != 3)
    throw std::invalid_argument("widths must be given as a,b,c");
  return w;
}

fas::Dataset load_or_fail(const std::string& dir) {
  if (dir.empty()) throw std::invalid_argument("--data is required");
  return fas::load_dataset(dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage generative pipeline for fluid-antenna channel estimation and port selection"};
  app.require_subcommand(1);
  std::uint64_t seed = master_seed_default();
  app.add_option("--seed", seed, "master seed (or env FAS_MASTER_SEED)");

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "synthesize a normalized channel dataset");
  std::string gen_out = "data";
  int gen_nx = 12, gen_ny = 12, gen_paths = 8, gen_count = 2000;
  double gen_wx = 1.375, gen_wy = 1.375;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--nx", gen_nx);
  gen->add_option("--ny", gen_ny);
  gen->add_option("--wx", gen_wx, "aperture in wavelengths");
  gen->add_option("--wy", gen_wy);
  gen->add_option("--paths", gen_paths, "dominant paths per channel");
  gen->add_option("--count", gen_count);

  // train-prior
  auto* tp = app.add_subcommand("train-prior", "train the flow-matching channel prior");
  std::string tp_data, tp_out = "prior";
  std::string tp_widths = "32,64,96";
  int tp_emb = 128, tp_batch = 64, tp_epochs = 100, tp_every = 0, tp_threads = 0;
  double tp_lr = 1e-4;
  tp->add_option("--data", tp_data)->required();
  tp->add_option("--out", tp_out, "checkpoint stem");
  tp->add_option("--widths", tp_widths, "channel widths per level, a,b,c");
  tp->add_option("--emb-dim", tp_emb);
  tp->add_option("--batch", tp_batch);
  tp->add_option("--lr", tp_lr);
  tp->add_option("--epochs", tp_epochs);
  tp->add_option("--checkpoint-every", tp_every);
  tp->add_option("--threads", tp_threads);

  // estimate
  auto* est = app.add_subcommand("estimate", "run one guided estimation trial");
  std::string est_prior, est_data, est_out = "estimate_out";
  int est_users = 2, est_nfe = 20, est_niter = 3;
  double est_snr = 20.0, est_delta = 0.25, est_alpha = 50.0;
  est->add_option("--prior", est_prior)->required();
  est->add_option("--data", est_data)->required();
  est->add_option("--out", est_out);
  est->add_option("--users", est_users);
  est->add_option("--snr", est_snr, "pilot SNR in dB");
  est->add_option("--delta", est_delta, "sub-sampling ratio");
  est->add_option("--nfe", est_nfe);
  est->add_option("--n-iter", est_niter);
  est->add_option("--alpha", est_alpha);

  // build-sl-data
  auto* sl = app.add_subcommand("build-sl-data", "label channels with the AO heuristic");
  std::string sl_data, sl_out = "sl_data";
  int sl_users = 2, sl_m = 2, sl_count = 500;
  double sl_snr_ref = 10.0;
  sl->add_option("--data", sl_data)->required();
  sl->add_option("--out", sl_out)->required();
  sl->add_option("--users", sl_users);
  sl->add_option("--rf-chains", sl_m);
  sl->add_option("--snr-ref", sl_snr_ref, "reference SNR for labels, dB");
  sl->add_option("--count", sl_count);

  // train-selector
  auto* ts = app.add_subcommand("train-selector", "train the discrete-diffusion port selector");
  std::string ts_mode = "sl", ts_sl_data, ts_out = "selector", ts_init, ts_widths = "32,64,96";
  int ts_emb = 128, ts_steps = 500, ts_epochs = 100, ts_batch = 16, ts_threads = 0;
  int ts_candidates = 8, ts_hops = 10;
  double ts_lr = 1e-4;
  ts->add_option("mode", ts_mode, "sl or rl")->required();
  ts->add_option("--sl-data", ts_sl_data)->required();
  ts->add_option("--out", ts_out, "checkpoint stem");
  ts->add_option("--init", ts_init, "checkpoint to fine-tune (rl)");
  ts->add_option("--widths", ts_widths);
  ts->add_option("--emb-dim", ts_emb);
  ts->add_option("--steps", ts_steps, "diffusion steps T");
  ts->add_option("--epochs", ts_epochs);
  ts->add_option("--batch", ts_batch);
  ts->add_option("--lr", ts_lr);
  ts->add_option("--candidates", ts_candidates, "rollouts per instance (rl)");
  ts->add_option("--traj-hops", ts_hops, "skipped-sampling steps T'");
  ts->add_option("--threads", ts_threads);

  // select
  auto* sel = app.add_subcommand("select", "select ports for one synthetic channel");
  std::string sel_ckpt, sel_data, sel_prior, sel_out;
  int sel_users = 2, sel_m = 2, sel_steps = 500, sel_hops = 10;
  double sel_snr = 10.0, sel_delta = 0.25;
  sel->add_option("--selector", sel_ckpt)->required();
  sel->add_option("--data", sel_data)->required();
  sel->add_option("--prior", sel_prior, "estimate the channel first (otherwise true CSI)");
  sel->add_option("--out", sel_out, "optional JSON report path");
  sel->add_option("--users", sel_users);
  sel->add_option("--rf-chains", sel_m);
  sel->add_option("--snr", sel_snr);
  sel->add_option("--delta", sel_delta);
  sel->add_option("--steps", sel_steps);
  sel->add_option("--traj-hops", sel_hops);

  // sweep
  auto* sw = app.add_subcommand("sweep", "run a metric sweep from a config file");
  std::string sw_config, sw_out;
  sw->add_option("--config", sw_config, "ExperimentConfig JSON")->required();
  sw->add_option("--out", sw_out, "override output directory");

  // figures
  auto* fig = app.add_subcommand("figures", "aggregate metrics into figure tables");
  std::string fig_metrics, fig_out = "figures";
  fig->add_option("--metrics", fig_metrics, "metrics.csv from a sweep")->required();
  fig->add_option("--out", fig_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const fas::Geometry geom{gen_nx, gen_ny, gen_wx, gen_wy};
      const auto ds = fas::generate_dataset(geom, gen_paths, gen_count, seed);
      fas::save_dataset(ds, gen_out);
      std::cout << "wrote " << ds.count() << " samples (norm_const=" << ds.norm_const << ") to "
                << gen_out << "\n";
    } else if (tp->parsed()) {
      const auto ds = load_or_fail(tp_data);
      fas::VelocityNetwork net(ds.geometry, parse_widths(tp_widths), tp_emb,
                               fas::derive_seed(seed, 0x11));
      fas::TrainHyper hyper;
      hyper.batch = tp_batch;
      hyper.lr = tp_lr;
      hyper.epochs = tp_epochs;
      hyper.seed = seed;
      hyper.threads = tp_threads;
      hyper.checkpoint_every = tp_every;
      const auto report = fas::train_prior(ds, hyper, net);
      net.save(tp_out, seed, tp_epochs);
      std::cout << "epoch losses:";
      for (double l : report.epoch_loss) std::cout << ' ' << l;
      std::cout << "\nsaved " << tp_out << ".json/.bin\n";
    } else if (est->parsed()) {
      const auto ds = load_or_fail(est_data);
      const auto prior = fas::VelocityNetwork::load(est_prior);
      const int n = ds.geometry.ports();
      fas::MatXcd truth(n, est_users);
      for (int k = 0; k < est_users; ++k)
        truth.col(k) = fas::sample_new_channel(ds, fas::derive_seed(seed, 0xC0 + k));
      const double sigma2 = fas::NoiseModel::from_snr_db(est_snr).sigma2;
      const int n_obs = std::max(1, std::min(n, static_cast<int>(std::lround(est_delta * n))));
      const auto pattern = fas::build_sampling_pattern(ds.geometry, n_obs,
                                                       fas::SamplingStrategy::kUniformGrid);
      const auto codebook = fas::build_pilot_codebook(est_users);
      const auto obs = fas::observe_pilots(truth, pattern, codebook, sigma2,
                                           fas::derive_seed(seed, 0xE0));
      fas::GuidanceConfig g;
      g.nfe = est_nfe;
      g.n_iter = est_niter;
      g.alpha = est_alpha;
      g.seed = fas::derive_seed(seed, 0xF0);
      fas::EstimateDiagnostics diag;
      const auto estimate = fas::estimate_channels(obs, prior, g, &diag);
      std::filesystem::create_directories(est_out);
      fas::Json report = {{"nmse", fas::nmse(estimate, truth)},
                          {"final_residual", diag.final_residual},
                          {"max_tweedie_dev", diag.max_tweedie_dev},
                          {"snr_db", est_snr},
                          {"delta", pattern.delta},
                          {"nfe", est_nfe}};
      fas::write_json_file(std::filesystem::path(est_out) / "report.json", report);
      std::cout << report.dump(2) << "\n";
    } else if (sl->parsed()) {
      const auto ds = load_or_fail(sl_data);
      const double sigma2_ref = fas::NoiseModel::from_snr_db(sl_snr_ref).sigma2;
      const auto instances = fas::build_sl_dataset(ds, sl_users, sl_m, sigma2_ref, sl_count, seed);
      fas::save_sl_dataset(instances, ds.geometry, sl_out);
      double mean_util = 0.0;
      for (const auto& inst : instances) mean_util += inst.utility;
      std::cout << "wrote " << instances.size() << " labeled instances (mean AO utility "
                << mean_util / instances.size() << ") to " << sl_out << "\n";
    } else if (ts->parsed()) {
      fas::Geometry geom;
      const auto instances = fas::load_sl_dataset(ts_sl_data, &geom);
      const auto schedule = fas::cosine_schedule(ts_steps);
      const int users = static_cast<int>(instances.front().channel.cols());
      if (ts_mode == "sl") {
        fas::DenoiserNetwork net(geom, users, parse_widths(ts_widths), ts_emb,
                                 fas::derive_seed(seed, 0x22));
        fas::SlHyper hyper;
        hyper.batch = ts_batch;
        hyper.lr = ts_lr;
        hyper.epochs = ts_epochs;
        hyper.seed = seed;
        hyper.threads = ts_threads;
        const auto report = fas::sl_train(net, instances, schedule, hyper);
        net.save(ts_out, seed, ts_epochs);
        std::cout << "final epoch BCE " << report.epoch_loss.back() << "; saved " << ts_out
                  << ".json/.bin\n";
      } else if (ts_mode == "rl") {
        if (ts_init.empty()) throw std::invalid_argument("rl mode requires --init checkpoint");
        auto net = fas::DenoiserNetwork::load(ts_init);
        fas::RlHyper hyper;
        hyper.candidates = ts_candidates;
        hyper.lr = ts_lr;
        hyper.epochs = ts_epochs;
        hyper.seed = seed;
        hyper.traj_hops = ts_hops;
        hyper.threads = ts_threads;
        const auto report = fas::rl_finetune(net, instances, schedule, hyper);
        net.save(ts_out, seed, ts_epochs);
        std::cout << "rl updates " << report.updates << ", skipped " << report.skipped
                  << ", final mean best reward " << report.epoch_mean_best_reward.back()
                  << "; saved " << ts_out << ".json/.bin\n";
      } else {
        throw std::invalid_argument("train-selector mode must be sl or rl");
      }
    } else if (sel->parsed()) {
      const auto ds = load_or_fail(sel_data);
      auto net = fas::DenoiserNetwork::load(sel_ckpt);
      const int n = ds.geometry.ports();
      fas::MatXcd truth(n, sel_users);
      for (int k = 0; k < sel_users; ++k)
        truth.col(k) = fas::sample_new_channel(ds, fas::derive_seed(seed, 0xC0 + k));
      const double sigma2 = fas::NoiseModel::from_snr_db(sel_snr).sigma2;
      fas::MatXcd conditioning = truth;
      if (!sel_prior.empty()) {
        const auto prior = fas::VelocityNetwork::load(sel_prior);
        const int n_obs = std::max(1, std::min(n, static_cast<int>(std::lround(sel_delta * n))));
        const auto pattern = fas::build_sampling_pattern(ds.geometry, n_obs,
                                                         fas::SamplingStrategy::kUniformGrid);
        const auto codebook = fas::build_pilot_codebook(sel_users);
        const auto obs = fas::observe_pilots(truth, pattern, codebook, sigma2,
                                             fas::derive_seed(seed, 0xE0));
        fas::GuidanceConfig g;
        g.seed = fas::derive_seed(seed, 0xF0);
        conditioning = fas::estimate_channels(obs, prior, g);
      }
      const auto schedule = fas::cosine_schedule(sel_steps);
      const auto traj = fas::uniform_trajectory(sel_steps, sel_hops);
      const auto mask = fas::select_ports(net, conditioning, schedule, traj, sel_m,
                                          fas::derive_seed(seed, 0xAB));
      fas::Json report = {{"active_ports", mask.active_indices()},
                          {"min_rate", fas::utility(mask, truth, sigma2)},
                          {"snr_db", sel_snr}};
      if (!sel_out.empty()) fas::write_json_file(sel_out, report);
      std::cout << report.dump(2) << "\n";
    } else if (sw->parsed()) {
      auto config = fas::ExperimentConfig::from_json(fas::read_json_file(sw_config));
      if (app.count("--seed") > 0) config.master_seed = seed;
      if (!sw_out.empty()) config.out_dir = sw_out;
      const auto result = fas::run_sweep(config);
      int failures = 0;
      for (const auto& r : result.rows)
        if (r.status != "ok") ++failures;
      std::cout << "wrote " << result.rows.size() << " rows to " << result.metrics_csv << " ("
                << failures << " failed cells)\n";
    } else if (fig->parsed()) {
      const auto rows = fas::read_metrics_csv(fig_metrics);
      const auto written = fas::emit_figures(rows, fig_out);
      for (const auto& p : written) std::cout << "wrote " << p << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
