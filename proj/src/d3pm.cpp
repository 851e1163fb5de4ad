#include "fas/d3pm.hpp"

namespace fas {

namespace {

constexpr double kBetaFloor = 1e-6;
constexpr double kBetaCeil = 0.5 - 1e-6;

DiffusionSchedule from_per_step(int steps, const VecXd& beta_raw) {
  DiffusionSchedule sched;
  sched.steps = steps;
  sched.beta = VecXd::Zero(steps + 1);
  sched.beta_bar = VecXd::Zero(steps + 1);
  double signal = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double b = std::min(kBetaCeil, std::max(kBetaFloor, beta_raw[t]));
    sched.beta[t] = b;
    signal *= 1.0 - 2.0 * b;
    sched.beta_bar[t] = 0.5 * (1.0 - signal);
  }
  return sched;
}

}  // namespace

DiffusionSchedule cosine_schedule(int steps, double s) {
  if (steps < 2) throw std::invalid_argument("cosine_schedule: T must be >= 2");
  auto alpha_bar = [&](double t) {
    const double x = (t / steps + s) / (1.0 + s) * kPi / 2.0;
    return std::cos(x) * std::cos(x);
  };
  const double a0 = alpha_bar(0.0);
  VecXd beta_raw = VecXd::Zero(steps + 1);
  double prev = 1.0;  // alpha_bar(0)/a0
  for (int t = 1; t <= steps; ++t) {
    const double cur = alpha_bar(static_cast<double>(t)) / a0;
    // 1 - 2 beta_t = alpha_bar(t)/alpha_bar(t-1)
    beta_raw[t] = 0.5 * (1.0 - cur / prev);
    prev = cur;
  }
  return from_per_step(steps, beta_raw);
}

DiffusionSchedule linear_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 2) throw std::invalid_argument("linear_schedule: T must be >= 2");
  VecXd beta_raw = VecXd::Zero(steps + 1);
  for (int t = 1; t <= steps; ++t)
    beta_raw[t] = beta_min + (beta_max - beta_min) * (t - 1) / (steps - 1);
  return from_per_step(steps, beta_raw);
}

Mask forward_sample(const Mask& x0, int t, const DiffusionSchedule& schedule,
                    std::uint64_t seed) {
  if (t < 1 || t > schedule.steps) throw std::invalid_argument("forward_sample: t out of range");
  const double flip = schedule.beta_bar[t];
  Rng rng(seed);
  Mask x = x0;
  for (auto& v : x)
    if (rng.uniform() < flip) v = static_cast<std::uint8_t>(1 - v);
  return x;
}

namespace {

inline double kernel(int a, int b, double flip) { return a == b ? 1.0 - flip : flip; }

}  // namespace

double posterior_probability(int x_prev, int x_cur, int x0, int t,
                             const DiffusionSchedule& schedule) {
  if (t < 2 || t > schedule.steps)
    throw std::invalid_argument("posterior_probability: need 2 <= t <= T");
  const double step_flip = schedule.beta[t];
  const double cum_prev = schedule.beta_bar[t - 1];
  const double cum_cur = schedule.beta_bar[t];
  const double num = kernel(x_prev, x_cur, step_flip) * kernel(x0, x_prev, cum_prev);
  const double den = kernel(x0, x_cur, cum_cur);
  return num / den;
}

double skipped_posterior_probability(int x_prev, int x_cur, int x0, int t_lo, int t_hi,
                                     const DiffusionSchedule& schedule) {
  if (t_lo < 1) throw std::invalid_argument("skipped_posterior_probability: need t_lo >= 1");
  const double seg_flip = schedule.segment_flip(t_lo, t_hi);
  const double cum_lo = schedule.beta_bar[t_lo];
  const double cum_hi = schedule.beta_bar[t_hi];
  const double num = kernel(x_prev, x_cur, seg_flip) * kernel(x0, x_prev, cum_lo);
  const double den = kernel(x0, x_cur, cum_hi);
  return num / den;
}

Mask reverse_step(const DenoiserModel& model, const Mask& x_t, int t, const MatXcd& channel,
                  const DiffusionSchedule& schedule, std::uint64_t seed) {
  if (t < 2 || t > schedule.steps) throw std::invalid_argument("reverse_step: need 2 <= t <= T");
  const VecXd p0 = model.clean_prob(x_t, t, channel);
  Rng rng(seed);
  Mask out(x_t.size());
  for (std::size_t n = 0; n < x_t.size(); ++n) {
    const int cur = x_t[n];
    const double p1 = p0[static_cast<Eigen::Index>(n)];
    const double prob_one = posterior_probability(1, cur, 0, t, schedule) * (1.0 - p1) +
                            posterior_probability(1, cur, 1, t, schedule) * p1;
    out[n] = rng.uniform() < prob_one ? 1 : 0;
  }
  return out;
}

double bce_loss(const DenoiserModel& model, const Mask& x0, const Mask& x_t, int t,
                const MatXcd& channel) {
  if (x0.size() != x_t.size()) throw std::invalid_argument("bce_loss: mask size mismatch");
  const VecXd p = model.clean_prob(x_t, t, channel);
  double loss = 0.0;
  for (std::size_t n = 0; n < x0.size(); ++n) {
    double q = p[static_cast<Eigen::Index>(n)];
    q = std::min(1.0 - 1e-7, std::max(1e-7, q));
    loss -= x0[n] ? std::log(q) : std::log(1.0 - q);
  }
  return loss;
}

DenoiserNetwork::DenoiserNetwork(const Geometry& geom, int users,
                                 const std::array<int, 3>& widths, int emb_dim,
                                 std::uint64_t init_seed)
    : geom_(geom),
      users_(users),
      net_([&] {
        nn::UNetConfig cfg;
        cfg.in_ch = 2 * users + 1;
        cfg.out_ch = 1;
        cfg.grid_nx = geom.nx;
        cfg.grid_ny = geom.ny;
        cfg.widths = widths;
        cfg.emb_dim = emb_dim;
        cfg.t_scale = 1.0;  // diffusion step index embedded directly
        return nn::UNet(cfg);
      }()) {
  if (users < 1) throw std::invalid_argument("DenoiserNetwork: users must be >= 1");
  net_.init_params(init_seed);
}

DenoiserNetwork::DenoiserNetwork(nn::UNet net, Geometry geom, int users)
    : geom_(geom), users_(users), net_(std::move(net)) {
  if (net_.config().in_ch != 2 * users + 1 || net_.config().out_ch != 1 ||
      net_.config().grid_nx != geom.nx || net_.config().grid_ny != geom.ny)
    throw std::invalid_argument("DenoiserNetwork: checkpoint does not match geometry/users");
}

void DenoiserNetwork::fill_input(const Mask& x_t, const MatXcd& channel,
                                 float* sample_dst) const {
  const int n = geom_.ports();
  if (static_cast<int>(x_t.size()) != n || channel.rows() != n || channel.cols() != users_)
    throw std::invalid_argument("DenoiserNetwork: input shape mismatch");
  for (int k = 0; k < users_; ++k)
    for (int i = 0; i < n; ++i) {
      sample_dst[static_cast<std::size_t>(k) * n + i] = static_cast<float>(channel(i, k).real());
      sample_dst[static_cast<std::size_t>(users_ + k) * n + i] =
          static_cast<float>(channel(i, k).imag());
    }
  for (int i = 0; i < n; ++i)
    sample_dst[static_cast<std::size_t>(2 * users_) * n + i] = static_cast<float>(x_t[static_cast<std::size_t>(i)]);
}

VecXd DenoiserNetwork::clean_prob(const Mask& x_t, int t, const MatXcd& channel) const {
  const int n = geom_.ports();
  nn::Tensor x(1, 2 * users_ + 1, geom_.ny, geom_.nx);
  fill_input(x_t, channel, x.v.data());
  nn::UNet::Cache cache;
  nn::Tensor logits;
  net_.forward(x, {static_cast<double>(t)}, cache, logits);
  VecXd p(n);
  for (int i = 0; i < n; ++i)
    p[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits.v[static_cast<std::size_t>(i)])));
  return p;
}

void DenoiserNetwork::save(const std::filesystem::path& stem, std::uint64_t seed,
                           int epoch) const {
  nn::CheckpointMeta meta;
  meta.seed = seed;
  meta.epoch = epoch;
  meta.extra = {{"kind", "denoiser"},
                {"users", users_},
                {"geometry", {{"nx", geom_.nx}, {"ny", geom_.ny}, {"wx", geom_.wx}, {"wy", geom_.wy}}}};
  nn::save_checkpoint(stem, net_, meta);
}

DenoiserNetwork DenoiserNetwork::load(const std::filesystem::path& stem) {
  nn::CheckpointMeta meta;
  nn::UNet net = nn::load_checkpoint(stem, &meta);
  if (meta.extra.value("kind", "") != "denoiser")
    throw std::runtime_error("DenoiserNetwork::load: checkpoint kind mismatch");
  Geometry geom{meta.extra["geometry"]["nx"].get<int>(), meta.extra["geometry"]["ny"].get<int>(),
                meta.extra["geometry"]["wx"].get<double>(),
                meta.extra["geometry"]["wy"].get<double>()};
  return DenoiserNetwork(std::move(net), geom, meta.extra["users"].get<int>());
}

}  // namespace fas
