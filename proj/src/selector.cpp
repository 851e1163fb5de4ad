#include "fas/selector.hpp"

#include "fas/io.hpp"
#include "fas/nn/adam.hpp"

#include <algorithm>
#include <numeric>

namespace fas {

namespace {

std::vector<int> random_indices(int n, int m, Rng& rng) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < m; ++i) {
    const auto j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  std::vector<int> out(pool.begin(), pool.begin() + m);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

AOResult ao_solve(const MatXcd& channel, double sigma2, int m, std::uint64_t seed,
                  int max_sweeps) {
  const int n = static_cast<int>(channel.rows());
  if (m < 1 || m > n) throw std::invalid_argument("ao_solve: need 1 <= M <= N");
  Rng rng(seed);
  std::vector<int> active = random_indices(n, m, rng);

  AOResult result;
  PortMask mask = mask_from_indices(n, active);
  double best = utility(mask, channel, sigma2);
  result.trace.push_back(best);

  std::vector<std::uint8_t> in_use(static_cast<std::size_t>(n), 0);
  for (int i : active) in_use[static_cast<std::size_t>(i)] = 1;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;
    for (int slot = 0; slot < m; ++slot) {
      const int current = active[static_cast<std::size_t>(slot)];
      int best_port = current;
      double best_util = best;
      for (int cand = 0; cand < n; ++cand) {
        if (in_use[static_cast<std::size_t>(cand)] && cand != current) continue;
        if (cand == current) continue;
        active[static_cast<std::size_t>(slot)] = cand;
        const double u = utility(mask_from_indices(n, active), channel, sigma2);
        if (u > best_util) {
          best_util = u;
          best_port = cand;
        }
      }
      active[static_cast<std::size_t>(slot)] = best_port;
      if (best_port != current) {
        in_use[static_cast<std::size_t>(current)] = 0;
        in_use[static_cast<std::size_t>(best_port)] = 1;
        best = best_util;
        result.trace.push_back(best);
        changed = true;
      }
    }
    result.sweeps = sweep + 1;
    if (!changed) {
      result.converged = true;
      break;
    }
  }
  result.mask = mask_from_indices(n, active);
  result.utility = best;
  return result;
}

OracleResult brute_force_oracle(const MatXcd& channel, double sigma2, int m) {
  const int n = static_cast<int>(channel.rows());
  if (m < 1 || m > n) throw std::invalid_argument("brute_force_oracle: need 1 <= M <= N");
  double combos = 1.0;
  for (int i = 0; i < m; ++i) combos = combos * (n - i) / (i + 1);
  if (combos > 1e6)
    throw std::invalid_argument("brute_force_oracle: C(N, M) exceeds the 1e6 guard");

  std::vector<int> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  OracleResult best;
  best.utility = -1.0;
  while (true) {
    const double u = utility(mask_from_indices(n, idx), channel, sigma2);
    if (u > best.utility) {  // lexicographic enumeration: first strict win keeps smallest set
      best.utility = u;
      best.mask = mask_from_indices(n, idx);
    }
    // Next combination in lexicographic order.
    int i = m - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - m + i) --i;
    if (i < 0) break;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < m; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  return best;
}

PortMask random_select(int n, int m, std::uint64_t seed) {
  if (m < 1 || m > n) throw std::invalid_argument("random_select: need 1 <= M <= N");
  Rng rng(seed);
  return mask_from_indices(n, random_indices(n, m, rng));
}

std::vector<LabeledInstance> build_sl_dataset(const Dataset& dataset, int users, int m,
                                              double sigma2_ref, int count,
                                              std::uint64_t seed) {
  if (users < 1 || count < 1) throw std::invalid_argument("build_sl_dataset: bad arguments");
  if (dataset.count() < users)
    throw std::invalid_argument("build_sl_dataset: dataset too small to draw K channels");
  const int n = dataset.geometry.ports();

  std::vector<LabeledInstance> out(static_cast<std::size_t>(count));
  parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    MatXcd channel(n, users);
    // K distinct training channels per instance.
    std::vector<int> chosen;
    while (static_cast<int>(chosen.size()) < users) {
      const int c = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(dataset.count())));
      if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
    }
    for (int k = 0; k < users; ++k) channel.col(k) = dataset.sample_complex(chosen[static_cast<std::size_t>(k)]);
    const AOResult ao = ao_solve(channel, sigma2_ref, m, derive_seed(seed, 0xa0000000ULL + i));
    out[i] = {std::move(channel), ao.mask, ao.utility, sigma2_ref};
  });
  return out;
}

void save_sl_dataset(const std::vector<LabeledInstance>& instances, const Geometry& geom,
                     const std::filesystem::path& dir) {
  if (instances.empty()) throw std::invalid_argument("save_sl_dataset: empty set");
  std::filesystem::create_directories(dir);
  const int n = geom.ports();
  const int users = static_cast<int>(instances.front().channel.cols());
  const int m = instances.front().label.active_count();
  const std::size_t rec = static_cast<std::size_t>(2 * n) * users + n;

  std::vector<float> flat(rec * instances.size());
  Json utilities = Json::array();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    float* dst = flat.data() + rec * i;
    for (int k = 0; k < users; ++k)
      for (int r = 0; r < n; ++r) {
        dst[static_cast<std::size_t>(k) * 2 * n + r] = static_cast<float>(inst.channel(r, k).real());
        dst[static_cast<std::size_t>(k) * 2 * n + n + r] = static_cast<float>(inst.channel(r, k).imag());
      }
    for (int r = 0; r < n; ++r)
      dst[static_cast<std::size_t>(2 * n) * users + r] = static_cast<float>(inst.label.x[static_cast<std::size_t>(r)]);
    utilities.push_back(inst.utility);
  }

  Json manifest;
  manifest["geometry"] = {{"nx", geom.nx}, {"ny", geom.ny}, {"wx", geom.wx}, {"wy", geom.wy}};
  manifest["count"] = instances.size();
  manifest["users"] = users;
  manifest["active_ports"] = m;
  manifest["sigma2_ref"] = instances.front().sigma2_ref;
  manifest["utilities"] = utilities;
  manifest["dtype"] = "float32";
  manifest["byte_order"] = "little-endian";
  manifest["layout"] = "row-major";
  manifest["record_floats"] = rec;
  manifest["data_file"] = "instances.f32";
  write_json_file(dir / "manifest.json", manifest);
  write_raw_f32(dir / "instances.f32", flat.data(), flat.size());
}

std::vector<LabeledInstance> load_sl_dataset(const std::filesystem::path& dir, Geometry* geom_out) {
  const Json m = read_json_file(dir / "manifest.json");
  const Geometry geom{m["geometry"]["nx"].get<int>(), m["geometry"]["ny"].get<int>(),
                      m["geometry"]["wx"].get<double>(), m["geometry"]["wy"].get<double>()};
  if (geom_out != nullptr) *geom_out = geom;
  const int n = geom.ports();
  const auto count = m["count"].get<std::size_t>();
  const int users = m["users"].get<int>();
  const double sigma2_ref = m["sigma2_ref"].get<double>();
  const std::size_t rec = m["record_floats"].get<std::size_t>();
  const auto flat = read_raw_f32(dir / m.value("data_file", "instances.f32"), rec * count);

  std::vector<LabeledInstance> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float* src = flat.data() + rec * i;
    MatXcd channel(n, users);
    for (int k = 0; k < users; ++k)
      for (int r = 0; r < n; ++r)
        channel(r, k) = Cplx(src[static_cast<std::size_t>(k) * 2 * n + r],
                             src[static_cast<std::size_t>(k) * 2 * n + n + r]);
    PortMask mask;
    mask.x.resize(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r)
      mask.x[static_cast<std::size_t>(r)] = src[static_cast<std::size_t>(2 * n) * users + r] > 0.5f ? 1 : 0;
    out[i] = {std::move(channel), std::move(mask), m["utilities"][i].get<double>(), sigma2_ref};
  }
  return out;
}

namespace {

// Joint symmetry transform of a (channel, mask) pair: axis mirrors permute
// the port grid of both, a per-user global phase rotates each column.
void apply_symmetry(const Geometry& geom, bool flip_x, bool flip_y,
                    const std::vector<double>& phases, const MatXcd& channel_in,
                    const Mask& mask_in, MatXcd& channel_out, Mask& mask_out) {
  const int nx = geom.nx, ny = geom.ny;
  const int n = nx * ny;
  channel_out.resize(channel_in.rows(), channel_in.cols());
  mask_out.resize(mask_in.size());
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      const int src = (flip_y ? ny - 1 - y : y) * nx + (flip_x ? nx - 1 - x : x);
      const int dst = y * nx + x;
      for (Eigen::Index k = 0; k < channel_in.cols(); ++k) {
        const Cplx rot(std::cos(phases[static_cast<std::size_t>(k)]),
                       std::sin(phases[static_cast<std::size_t>(k)]));
        channel_out(dst, k) = rot * channel_in(src, k);
      }
      mask_out[static_cast<std::size_t>(dst)] = mask_in[static_cast<std::size_t>(src)];
    }
  (void)n;
}

// Shared batched BCE step for SL training and RL updates. Labels enter as
// (instance, mask-label, corrupted mask, step); loss is the per-instance sum
// over ports, averaged over the batch and scaled by `weight`.
double bce_batch_step(DenoiserNetwork& net, const std::vector<const MatXcd*>& channels,
                      const std::vector<const Mask*>& labels, const std::vector<Mask>& corrupted,
                      const std::vector<int>& t_steps, double weight,
                      std::vector<std::vector<float>>& shard_grads,
                      std::vector<nn::UNet::Cache>& caches, std::vector<float>& grads,
                      nn::Adam& opt, int workers) {
  nn::UNet& unet = net.net();
  const auto& cfg = unet.config();
  const int bsz = static_cast<int>(channels.size());
  const int n = cfg.grid_nx * cfg.grid_ny;
  const int shards = std::max(1, std::min(workers, bsz));

  std::vector<double> shard_loss(static_cast<std::size_t>(shards), 0.0);
  parallel_for(static_cast<std::size_t>(shards), [&](std::size_t w) {
    const int lo = static_cast<int>(bsz * w / static_cast<std::size_t>(shards));
    const int hi = static_cast<int>(bsz * (w + 1) / static_cast<std::size_t>(shards));
    if (hi == lo) return;
    nn::Tensor x(hi - lo, cfg.in_ch, cfg.grid_ny, cfg.grid_nx);
    std::vector<double> tv(static_cast<std::size_t>(hi - lo));
    for (int i = lo; i < hi; ++i) {
      net.fill_input(corrupted[static_cast<std::size_t>(i)], *channels[static_cast<std::size_t>(i)],
                     x.sample(i - lo));
      tv[static_cast<std::size_t>(i - lo)] = static_cast<double>(t_steps[static_cast<std::size_t>(i)]);
    }
    nn::Tensor logits;
    unet.forward(x, tv, caches[w], logits);

    nn::Tensor dlogits(logits.n, logits.c, logits.h, logits.w);
    double loss = 0.0;
    for (int i = lo; i < hi; ++i) {
      const Mask& y = *labels[static_cast<std::size_t>(i)];
      const float* lg = logits.sample(i - lo);
      float* dl = dlogits.sample(i - lo);
      for (int j = 0; j < n; ++j) {
        const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(lg[j])));
        const double pc = std::min(1.0 - 1e-7, std::max(1e-7, p));
        loss -= y[static_cast<std::size_t>(j)] ? std::log(pc) : std::log(1.0 - pc);
        const double g = (p > 1e-7 && p < 1.0 - 1e-7)
                             ? (p - static_cast<double>(y[static_cast<std::size_t>(j)]))
                             : 0.0;
        dl[j] = static_cast<float>(weight * g / bsz);
      }
    }
    shard_loss[w] = loss;
    std::fill(shard_grads[w].begin(), shard_grads[w].end(), 0.0f);
    unet.backward(caches[w], dlogits, shard_grads[w].data());
  }, shards);

  double loss = 0.0;
  for (int w = 0; w < shards; ++w) loss += shard_loss[static_cast<std::size_t>(w)];
  loss /= bsz;
  if (!std::isfinite(loss)) throw std::runtime_error("bce training step diverged (non-finite loss)");

  std::fill(grads.begin(), grads.end(), 0.0f);
  for (int w = 0; w < shards; ++w)
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += shard_grads[static_cast<std::size_t>(w)][i];
  opt.step(unet.params(), grads.data());
  return loss;
}

}  // namespace

SlReport sl_train(DenoiserNetwork& net, const std::vector<LabeledInstance>& instances,
                  const DiffusionSchedule& schedule, const SlHyper& hyper) {
  if (instances.empty()) throw std::invalid_argument("sl_train: no instances");
  if (hyper.batch < 1 || !(hyper.lr > 0.0)) throw std::invalid_argument("sl_train: bad hyper");

  nn::UNet& unet = net.net();
  nn::Adam opt(unet.param_count(), hyper.lr);
  const int count = static_cast<int>(instances.size());
  const int batch = std::min(hyper.batch, count);
  const int steps_per_epoch = (count + batch - 1) / batch;
  const int workers = std::max(1, hyper.threads > 0 ? hyper.threads : hardware_threads());

  std::vector<std::vector<float>> shard_grads(static_cast<std::size_t>(workers));
  for (auto& g : shard_grads) g.assign(unet.param_count(), 0.0f);
  std::vector<nn::UNet::Cache> caches(static_cast<std::size_t>(workers));
  std::vector<float> grads(unet.param_count());

  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(hyper.seed, 0x51));

  const Geometry geom = net.geometry();
  const int users = net.users();
  SlReport report;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    if (hyper.final_lr_fraction < 1.0 && hyper.epochs > 1) {
      const double phase = static_cast<double>(epoch) / (hyper.epochs - 1);
      const double scale = hyper.final_lr_fraction +
                           (1.0 - hyper.final_lr_fraction) * 0.5 * (1.0 + std::cos(kPi * phase));
      opt.set_lr(hyper.lr * scale);
    }
    for (int i = count - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    double epoch_total = 0.0;
    int seen = 0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const int lo = step * batch;
      const int hi = std::min(lo + batch, count);
      const int bsz = hi - lo;
      std::vector<const MatXcd*> channels;
      std::vector<const Mask*> labels;
      std::vector<MatXcd> aug_channels(static_cast<std::size_t>(bsz));
      std::vector<Mask> aug_labels(static_cast<std::size_t>(bsz));
      std::vector<Mask> corrupted;
      std::vector<int> ts;
      for (int i = lo; i < hi; ++i) {
        const auto& inst = instances[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        const Mask* label = &inst.label.x;
        const MatXcd* channel = &inst.channel;
        if (hyper.symmetry_augment) {
          std::vector<double> phases(static_cast<std::size_t>(users));
          for (auto& p : phases) p = rng.uniform(0.0, 2.0 * kPi);
          const bool fx = rng.uniform() < 0.5;
          const bool fy = rng.uniform() < 0.5;
          apply_symmetry(geom, fx, fy, phases, inst.channel, inst.label.x,
                         aug_channels[static_cast<std::size_t>(i - lo)],
                         aug_labels[static_cast<std::size_t>(i - lo)]);
          channel = &aug_channels[static_cast<std::size_t>(i - lo)];
          label = &aug_labels[static_cast<std::size_t>(i - lo)];
        }
        const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(schedule.steps)));
        corrupted.push_back(forward_sample(*label, t, schedule, rng.raw()));
        channels.push_back(channel);
        labels.push_back(label);
        ts.push_back(t);
      }
      epoch_total += bce_batch_step(net, channels, labels, corrupted, ts, 1.0, shard_grads, caches,
                                    grads, opt, workers) *
                     static_cast<double>(bsz);
      seen += bsz;
    }
    report.epoch_loss.push_back(epoch_total / seen);

    if (!hyper.checkpoint_dir.empty()) {
      const bool last = epoch + 1 == hyper.epochs;
      const bool periodic = hyper.checkpoint_every > 0 && (epoch + 1) % hyper.checkpoint_every == 0;
      if (last || periodic)
        net.save(hyper.checkpoint_dir / ("selector_sl_epoch" + std::to_string(epoch + 1)),
                 hyper.seed, epoch + 1);
    }
  }
  return report;
}

void SamplerTrajectory::validate(int t_max) const {
  if (taus.size() < 2 || taus.front() != 0 || taus.back() != t_max)
    throw std::invalid_argument("SamplerTrajectory: endpoints must be 0 and T");
  for (std::size_t i = 1; i < taus.size(); ++i)
    if (taus[i] <= taus[i - 1])
      throw std::invalid_argument("SamplerTrajectory: steps must be strictly increasing");
}

SamplerTrajectory uniform_trajectory(int t_max, int hops) {
  if (hops < 1 || hops > t_max) throw std::invalid_argument("uniform_trajectory: need 1 <= T' <= T");
  SamplerTrajectory traj;
  traj.taus.resize(static_cast<std::size_t>(hops) + 1);
  for (int i = 0; i <= hops; ++i)
    traj.taus[static_cast<std::size_t>(i)] =
        static_cast<int>(std::llround(static_cast<double>(i) * t_max / hops));
  for (int i = 1; i <= hops; ++i)
    if (traj.taus[static_cast<std::size_t>(i)] <= traj.taus[static_cast<std::size_t>(i - 1)])
      traj.taus[static_cast<std::size_t>(i)] = traj.taus[static_cast<std::size_t>(i - 1)] + 1;
  traj.taus.back() = t_max;
  traj.validate(t_max);
  return traj;
}

PortMask select_ports(const DenoiserModel& model, const MatXcd& channel,
                      const DiffusionSchedule& schedule, const SamplerTrajectory& trajectory,
                      int m, std::uint64_t seed) {
  trajectory.validate(schedule.steps);
  const int n = model.ports();
  if (channel.rows() != n) throw std::invalid_argument("select_ports: channel/model mismatch");
  if (m < 1 || m > n) throw std::invalid_argument("select_ports: need 1 <= M <= N");

  Rng rng(seed);
  Mask x(static_cast<std::size_t>(n));
  for (auto& v : x) v = rng.uniform() < 0.5 ? 1 : 0;

  const int hops = trajectory.hops();
  VecXd p0;
  for (int i = hops; i >= 1; --i) {
    const int t_hi = trajectory.taus[static_cast<std::size_t>(i)];
    const int t_lo = trajectory.taus[static_cast<std::size_t>(i - 1)];
    p0 = model.clean_prob(x, t_hi, channel);
    if (i > 1) {
      for (int j = 0; j < n; ++j) {
        const double p1 = p0[j];
        const int cur = x[static_cast<std::size_t>(j)];
        const double prob_one =
            skipped_posterior_probability(1, cur, 0, t_lo, t_hi, schedule) * (1.0 - p1) +
            skipped_posterior_probability(1, cur, 1, t_lo, t_hi, schedule) * p1;
        x[static_cast<std::size_t>(j)] = rng.uniform() < prob_one ? 1 : 0;
      }
    }
  }

  // Deterministic top-M on the final clean probabilities.
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return p0[a] > p0[b]; });
  idx.resize(static_cast<std::size_t>(m));
  return mask_from_indices(n, idx);
}

RlReport rl_finetune(DenoiserNetwork& net, const std::vector<LabeledInstance>& instances,
                     const DiffusionSchedule& schedule, const RlHyper& hyper) {
  if (instances.empty()) throw std::invalid_argument("rl_finetune: no instances");
  if (hyper.candidates < 2) throw std::invalid_argument("rl_finetune: need C >= 2");

  nn::UNet& unet = net.net();
  nn::Adam opt(unet.param_count(), hyper.lr);
  const int count = static_cast<int>(instances.size());
  const int workers = std::max(1, hyper.threads > 0 ? hyper.threads : hardware_threads());
  const int m = instances.front().label.active_count();
  const SamplerTrajectory traj = uniform_trajectory(schedule.steps, hyper.traj_hops);

  std::vector<std::vector<float>> shard_grads(static_cast<std::size_t>(workers));
  for (auto& g : shard_grads) g.assign(unet.param_count(), 0.0f);
  std::vector<nn::UNet::Cache> caches(static_cast<std::size_t>(workers));
  std::vector<float> grads(unet.param_count());

  std::vector<double> baseline(static_cast<std::size_t>(count));
  std::vector<double> best_seen(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    baseline[static_cast<std::size_t>(i)] = instances[static_cast<std::size_t>(i)].utility;
    best_seen[static_cast<std::size_t>(i)] = instances[static_cast<std::size_t>(i)].utility;
  }

  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(hyper.seed, 0x71));

  RlReport report;
  std::uint64_t rollout = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (int i = count - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    double best_sum = 0.0;
    for (int oi = 0; oi < count; ++oi) {
      const int idx = order[static_cast<std::size_t>(oi)];
      const auto& inst = instances[static_cast<std::size_t>(idx)];

      // C parallel exploratory rollouts.
      std::vector<PortMask> masks(static_cast<std::size_t>(hyper.candidates));
      std::vector<double> rewards(static_cast<std::size_t>(hyper.candidates));
      const std::uint64_t base_roll = rollout;
      rollout += static_cast<std::uint64_t>(hyper.candidates);
      parallel_for(static_cast<std::size_t>(hyper.candidates), [&](std::size_t c) {
        masks[c] = select_ports(net, inst.channel, schedule, traj, m,
                                derive_seed(hyper.seed, 0x9000000000ULL + base_roll + c));
        rewards[c] = utility(masks[c], inst.channel, inst.sigma2_ref);
      }, workers);

      int best_c = 0;
      for (int c = 1; c < hyper.candidates; ++c)
        if (rewards[static_cast<std::size_t>(c)] > rewards[static_cast<std::size_t>(best_c)]) best_c = c;
      const double r_best = rewards[static_cast<std::size_t>(best_c)];
      best_sum += r_best;
      best_seen[static_cast<std::size_t>(idx)] = std::max(best_seen[static_cast<std::size_t>(idx)], r_best);

      if (r_best > baseline[static_cast<std::size_t>(idx)]) {
        const double advantage = r_best - baseline[static_cast<std::size_t>(idx)];
        const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(schedule.steps)));
        std::vector<Mask> corrupted{forward_sample(masks[static_cast<std::size_t>(best_c)].x, t,
                                                   schedule, rng.raw())};
        std::vector<const MatXcd*> channels{&inst.channel};
        std::vector<const Mask*> labels{&masks[static_cast<std::size_t>(best_c)].x};
        std::vector<int> ts{t};
        bce_batch_step(net, channels, labels, corrupted, ts, advantage, shard_grads, caches, grads,
                       opt, workers);
        ++report.updates;
      } else {
        ++report.skipped;
      }
    }
    for (int i = 0; i < count; ++i)
      baseline[static_cast<std::size_t>(i)] =
          std::max(baseline[static_cast<std::size_t>(i)], best_seen[static_cast<std::size_t>(i)]);
    report.epoch_mean_best_reward.push_back(best_sum / count);
  }
  return report;
}

}  // namespace fas
