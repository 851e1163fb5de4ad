// Binary denoising-diffusion machinery for port masks: cosine schedule on the
// cumulative signal coefficient, closed-form forward marginals, exact
// two-state posterior, reverse transitions by clean-state marginalization,
// the BCE surrogate loss, and the conditional denoiser network.
#pragma once

#include "fas/geometry.hpp"
#include "fas/nn/checkpoint.hpp"
#include "fas/uplink.hpp"

namespace fas {

// Symmetric-flip chain parameterized by cumulative flip probabilities:
// signal(t) = 1 - 2*beta_bar[t] = prod_{i<=t} (1 - 2*beta[i]).
struct DiffusionSchedule {
  int steps = 0;     // T
  VecXd beta;        // indices 1..T (index 0 unused)
  VecXd beta_bar;    // indices 0..T, beta_bar[0] = 0

  double signal(int t) const { return 1.0 - 2.0 * beta_bar[t]; }
  // Flip probability of the compound kernel from step t_lo to t_hi.
  double segment_flip(int t_lo, int t_hi) const {
    if (!(0 <= t_lo && t_lo < t_hi && t_hi <= steps))
      throw std::invalid_argument("DiffusionSchedule: bad segment");
    return 0.5 * (1.0 - signal(t_hi) / signal(t_lo));
  }
};

// Cumulative signal follows the cosine law alpha_bar(t) =
// cos^2(((t/T + s)/(1+s)) pi/2) / cos^2((s/(1+s)) pi/2), mapped through
// 1 - 2*beta_bar = alpha_bar; per-step flips recovered from the composition
// identity and clipped to (1e-6, 0.5 - 1e-6).
DiffusionSchedule cosine_schedule(int steps, double s = 0.008);
// Sensitivity-check alternative: beta_t linear in t.
DiffusionSchedule linear_schedule(int steps, double beta_min = 1e-4, double beta_max = 0.5 - 1e-6);

using Mask = std::vector<std::uint8_t>;

// Flip each coordinate of x0 independently with probability beta_bar[t].
Mask forward_sample(const Mask& x0, int t, const DiffusionSchedule& schedule, std::uint64_t seed);

// Per-coordinate P(x_{t-1} = x_prev | x_t = x_cur, x_0), 2 <= t <= T.
double posterior_probability(int x_prev, int x_cur, int x0, int t,
                             const DiffusionSchedule& schedule);
// Same under the compound kernel of a skipped segment t_lo < t_hi.
double skipped_posterior_probability(int x_prev, int x_cur, int x0, int t_lo, int t_hi,
                                     const DiffusionSchedule& schedule);

// Conditional clean-mask predictor abstraction (network or test stub).
struct DenoiserModel {
  virtual ~DenoiserModel() = default;
  // Per-port P(x0_n = 1 | x_t, channel), entries in (0, 1).
  virtual VecXd clean_prob(const Mask& x_t, int t, const MatXcd& channel) const = 0;
  virtual int ports() const = 0;
};

// Mixture transition P(x_{t-1}=1) = sum_{x0} q(x_{t-1}=1|x_t,x0) p(x0), then
// an independent Bernoulli draw per coordinate; 2 <= t <= T.
Mask reverse_step(const DenoiserModel& model, const Mask& x_t, int t, const MatXcd& channel,
                  const DiffusionSchedule& schedule, std::uint64_t seed);

// -sum_n log p(x0_n | x_t, channel), natural log, probabilities clamped to
// [1e-7, 1 - 1e-7].
double bce_loss(const DenoiserModel& model, const Mask& x0, const Mask& x_t, int t,
                const MatXcd& channel);

// U-Net denoiser conditioned on the multiuser channel: input planes are
// Re(h_1..h_K), Im(h_1..h_K), mask; output is one sigmoid plane of per-port
// clean probabilities.
class DenoiserNetwork : public DenoiserModel {
 public:
  DenoiserNetwork(const Geometry& geom, int users, const std::array<int, 3>& widths,
                  int emb_dim, std::uint64_t init_seed);
  DenoiserNetwork(nn::UNet net, Geometry geom, int users);

  VecXd clean_prob(const Mask& x_t, int t, const MatXcd& channel) const override;
  int ports() const override { return geom_.ports(); }
  int users() const { return users_; }
  const Geometry& geometry() const { return geom_; }
  nn::UNet& net() { return net_; }
  const nn::UNet& net() const { return net_; }

  // Batched input assembly shared with the trainers.
  void fill_input(const Mask& x_t, const MatXcd& channel, float* sample_dst) const;

  void save(const std::filesystem::path& stem, std::uint64_t seed, int epoch) const;
  static DenoiserNetwork load(const std::filesystem::path& stem);

 private:
  Geometry geom_;
  int users_ = 0;
  nn::UNet net_;
};

}  // namespace fas
