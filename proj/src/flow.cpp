#include "fas/flow.hpp"

#include "fas/nn/adam.hpp"

namespace fas {

VecXd ot_interpolate(const VecXd& h, const VecXd& z1, double t) {
  if (h.size() != z1.size()) throw std::invalid_argument("ot_interpolate: length mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("ot_interpolate: t outside [0,1]");
  return (1.0 - t) * h + t * z1;
}

VecXd cond_velocity(const VecXd& h, const VecXd& z1) {
  if (h.size() != z1.size()) throw std::invalid_argument("cond_velocity: length mismatch");
  return z1 - h;
}

double cfm_minibatch_loss(const VelocityModel& model, const CfmBatch& batch) {
  const Eigen::Index b = batch.h.cols();
  if (b == 0) throw std::invalid_argument("cfm_minibatch_loss: empty batch");
  if (batch.z1.cols() != b || batch.t.size() != b)
    throw std::invalid_argument("cfm_minibatch_loss: inconsistent batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const VecXd zt = ot_interpolate(batch.h.col(i), batch.z1.col(i), batch.t[i]);
    const VecXd target = batch.z1.col(i) - batch.h.col(i);
    total += (model.velocity(zt, batch.t[i]) - target).squaredNorm();
  }
  return total / static_cast<double>(b);
}

VelocityNetwork::VelocityNetwork(const Geometry& geom, const std::array<int, 3>& widths,
                                 int emb_dim, std::uint64_t init_seed)
    : geom_(geom),
      net_([&] {
        nn::UNetConfig cfg;
        cfg.in_ch = 2;
        cfg.out_ch = 2;
        cfg.grid_nx = geom.nx;
        cfg.grid_ny = geom.ny;
        cfg.widths = widths;
        cfg.emb_dim = emb_dim;
        cfg.t_scale = 1000.0;
        return nn::UNet(cfg);
      }()) {
  net_.init_params(init_seed);
}

VelocityNetwork::VelocityNetwork(nn::UNet net, Geometry geom)
    : geom_(geom), net_(std::move(net)) {
  if (net_.config().in_ch != 2 || net_.config().out_ch != 2 ||
      net_.config().grid_nx != geom.nx || net_.config().grid_ny != geom.ny)
    throw std::invalid_argument("VelocityNetwork: checkpoint does not match geometry");
}

VecXd VelocityNetwork::velocity(const VecXd& z, double t) const {
  return net_.apply(z, t);
}

void VelocityNetwork::save(const std::filesystem::path& stem, std::uint64_t seed,
                           int epoch) const {
  nn::CheckpointMeta meta;
  meta.seed = seed;
  meta.epoch = epoch;
  meta.extra = {{"kind", "velocity"},
                {"geometry", {{"nx", geom_.nx}, {"ny", geom_.ny}, {"wx", geom_.wx}, {"wy", geom_.wy}}}};
  nn::save_checkpoint(stem, net_, meta);
}

VelocityNetwork VelocityNetwork::load(const std::filesystem::path& stem) {
  nn::CheckpointMeta meta;
  nn::UNet net = nn::load_checkpoint(stem, &meta);
  if (meta.extra.value("kind", "") != "velocity")
    throw std::runtime_error("VelocityNetwork::load: checkpoint kind mismatch");
  Geometry geom{meta.extra["geometry"]["nx"].get<int>(), meta.extra["geometry"]["ny"].get<int>(),
                meta.extra["geometry"]["wx"].get<double>(),
                meta.extra["geometry"]["wy"].get<double>()};
  return VelocityNetwork(std::move(net), geom);
}

TrainReport train_prior(const Dataset& dataset, const TrainHyper& hyper, VelocityNetwork& net) {
  if (dataset.count() < 1) throw std::invalid_argument("train_prior: empty dataset");
  if (hyper.batch < 1 || !(hyper.lr > 0.0)) throw std::invalid_argument("train_prior: bad hyper");
  if (dataset.dim() != net.dim())
    throw std::invalid_argument("train_prior: dataset/network dimension mismatch");

  const int count = dataset.count();
  const int dim = dataset.dim();
  const int n_grid = dim / 2;
  const int batch = std::min(hyper.batch, count);
  const int steps_per_epoch = (count + batch - 1) / batch;
  const int threads = hyper.threads > 0 ? hyper.threads : hardware_threads();

  nn::UNet& unet = net.net();
  const auto cfg = unet.config();
  nn::Adam opt(unet.param_count(), hyper.lr);

  std::vector<float> grads(unet.param_count());
  const int workers = std::max(1, std::min(threads, batch));
  std::vector<std::vector<float>> shard_grads(static_cast<std::size_t>(workers));
  std::vector<nn::UNet::Cache> caches(static_cast<std::size_t>(workers));
  for (auto& g : shard_grads) g.assign(unet.param_count(), 0.0f);

  std::vector<int> order(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng shuffle_rng(derive_seed(hyper.seed, 0xdead));

  TrainReport report;
  report.epoch_loss.reserve(static_cast<std::size_t>(hyper.epochs));

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    if (hyper.final_lr_fraction < 1.0 && hyper.epochs > 1) {
      const double phase = static_cast<double>(epoch) / (hyper.epochs - 1);
      const double scale = hyper.final_lr_fraction +
                           (1.0 - hyper.final_lr_fraction) * 0.5 * (1.0 + std::cos(kPi * phase));
      opt.set_lr(hyper.lr * scale);
    }
    for (int i = count - 1; i > 0; --i) {
      const auto j = static_cast<int>(shuffle_rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    double epoch_total = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const int lo = step * batch;
      const int hi = std::min(lo + batch, count);
      const int bsz = hi - lo;

      // Deterministic per-(epoch, step) draw of times and source noise.
      Rng draw(derive_seed(hyper.seed, (static_cast<std::uint64_t>(epoch) << 24) ^
                                           static_cast<std::uint64_t>(step) + 1));
      nn::Tensor x(bsz, 2, cfg.grid_ny, cfg.grid_nx);
      nn::Tensor target(bsz, 2, cfg.grid_ny, cfg.grid_nx);
      std::vector<double> tvals(static_cast<std::size_t>(bsz));
      std::vector<float> h_aug(static_cast<std::size_t>(dim));
      const int nx = cfg.grid_nx, ny = cfg.grid_ny;
      for (int i = 0; i < bsz; ++i) {
        const int idx = order[static_cast<std::size_t>(lo + i)];
        double t = draw.uniform();
        t = std::min(1.0 - 1e-5, std::max(1e-5, t));
        tvals[static_cast<std::size_t>(i)] = t;
        const float* h = dataset.samples.col(idx).data();
        if (hyper.symmetry_augment) {
          const double phase = draw.uniform(0.0, 2.0 * kPi);
          const bool flip_x = draw.uniform() < 0.5;
          const bool flip_y = draw.uniform() < 0.5;
          const float cs = static_cast<float>(std::cos(phase));
          const float sn = static_cast<float>(std::sin(phase));
          for (int py = 0; py < ny; ++py)
            for (int px = 0; px < nx; ++px) {
              const int src = (flip_y ? ny - 1 - py : py) * nx + (flip_x ? nx - 1 - px : px);
              const int dst = py * nx + px;
              const float re = h[src], im = h[n_grid + src];
              h_aug[static_cast<std::size_t>(dst)] = cs * re - sn * im;
              h_aug[static_cast<std::size_t>(n_grid + dst)] = sn * re + cs * im;
            }
          h = h_aug.data();
        }
        float* xs = x.sample(i);
        float* ts = target.sample(i);
        for (int d = 0; d < dim; ++d) {
          const float z1 = static_cast<float>(draw.normal());
          xs[d] = static_cast<float>((1.0 - t) * h[d] + t * z1);
          ts[d] = z1 - h[d];
        }
      }

      // Shard the batch; each worker owns cache + gradient buffer.
      std::vector<double> shard_loss(static_cast<std::size_t>(workers), 0.0);
      const int shards = std::min(workers, bsz);
      parallel_for(static_cast<std::size_t>(shards), [&](std::size_t w) {
        const int slo = static_cast<int>(bsz * w / static_cast<std::size_t>(shards));
        const int shi = static_cast<int>(bsz * (w + 1) / static_cast<std::size_t>(shards));
        if (shi == slo) return;
        nn::Tensor xs(shi - slo, 2, cfg.grid_ny, cfg.grid_nx);
        std::copy(x.sample(slo), x.sample(slo) + xs.size(), xs.v.data());
        std::vector<double> tv(tvals.begin() + slo, tvals.begin() + shi);
        nn::Tensor out;
        unet.forward(xs, tv, caches[w], out);
        // L = (1/B) sum_i ||out_i - target_i||^2 -> dL/dout = 2 (out - target)/B
        nn::Tensor dout(out.n, out.c, out.h, out.w);
        double loss = 0.0;
        const float scale = 2.0f / static_cast<float>(bsz);
        const float* tgt = target.sample(slo);
        for (std::size_t i = 0; i < out.size(); ++i) {
          const float diff = out.v[i] - tgt[i];
          loss += static_cast<double>(diff) * diff;
          dout.v[i] = scale * diff;
        }
        shard_loss[w] = loss;
        std::fill(shard_grads[w].begin(), shard_grads[w].end(), 0.0f);
        unet.backward(caches[w], dout, shard_grads[w].data());
      }, workers);

      double step_loss = 0.0;
      for (int w = 0; w < shards; ++w) step_loss += shard_loss[static_cast<std::size_t>(w)];
      step_loss /= static_cast<double>(bsz);
      if (!std::isfinite(step_loss))
        throw std::runtime_error("train_prior: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch) + ", step " + std::to_string(step));
      epoch_total += step_loss;

      std::fill(grads.begin(), grads.end(), 0.0f);
      for (int w = 0; w < shards; ++w) {
        const auto& g = shard_grads[static_cast<std::size_t>(w)];
        for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += g[i];
      }
      opt.step(unet.params(), grads.data());
    }
    report.epoch_loss.push_back(epoch_total / steps_per_epoch);

    if (!hyper.checkpoint_dir.empty()) {
      const bool last = epoch + 1 == hyper.epochs;
      const bool periodic = hyper.checkpoint_every > 0 && (epoch + 1) % hyper.checkpoint_every == 0;
      if (last || periodic)
        net.save(hyper.checkpoint_dir / ("prior_epoch" + std::to_string(epoch + 1)), hyper.seed,
                 epoch + 1);
    }
  }
  return report;
}

VecXd sample_unconditional(const VelocityModel& model, int nfe, std::uint64_t seed) {
  if (nfe < 1) throw std::invalid_argument("sample_unconditional: NFE must be >= 1");
  const int dim = model.dim();
  Rng rng(seed);
  VecXd z(dim);
  for (int i = 0; i < dim; ++i) z[i] = rng.normal();
  const double dt = 1.0 / nfe;
  for (int i = 0; i < nfe; ++i) {
    const double t = 1.0 - i * dt;
    z -= model.velocity(z, t) * dt;
  }
  return z;
}

}  // namespace fas
