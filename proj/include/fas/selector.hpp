// Port selection: alternating-optimization heuristic and exhaustive oracle
// for labels and benchmarks, supervised training of the conditional mask
// denoiser, reinforcement fine-tuning, and online skipped-sampling inference
// with a deterministic top-M final step.
#pragma once

#include <filesystem>

#include "fas/d3pm.hpp"
#include "fas/dataset.hpp"

namespace fas {

struct AOResult {
  PortMask mask;
  double utility = 0.0;
  int sweeps = 0;
  bool converged = false;
  std::vector<double> trace;  // utility after each accepted move
};

// Coordinate ascent: from a seeded random feasible mask, repeatedly move each
// active port to the best position (including staying put) with the others
// fixed; stops after a sweep with no change or max_sweeps.
AOResult ao_solve(const MatXcd& channel, double sigma2, int m, std::uint64_t seed,
                  int max_sweeps = 20);

struct OracleResult {
  PortMask mask;
  double utility = 0.0;
};

// Exhaustive search over all C(N, M) masks; ties keep the lexicographically
// smallest index set. Guarded to C(N, M) <= 1e6.
OracleResult brute_force_oracle(const MatXcd& channel, double sigma2, int m);

PortMask random_select(int n, int m, std::uint64_t seed);

struct LabeledInstance {
  MatXcd channel;       // N x K
  PortMask label;       // AO solution
  double utility = 0.0; // AO utility at sigma2_ref == reward baseline
  double sigma2_ref = 0.0;
};

std::vector<LabeledInstance> build_sl_dataset(const Dataset& dataset, int users, int m,
                                              double sigma2_ref, int count,
                                              std::uint64_t seed);

void save_sl_dataset(const std::vector<LabeledInstance>& instances, const Geometry& geom,
                     const std::filesystem::path& dir);
std::vector<LabeledInstance> load_sl_dataset(const std::filesystem::path& dir, Geometry* geom = nullptr);

struct SlHyper {
  int batch = 16;
  double lr = 1e-4;
  double final_lr_fraction = 1.0;  // cosine decay down to lr * fraction
  int epochs = 100;
  std::uint64_t seed = 0;
  int threads = 0;
  // Exact-symmetry resampling (per-user phase rotation, axis mirrors applied
  // jointly to channels and labels); valid for the synthetic channel law.
  bool symmetry_augment = false;
  std::filesystem::path checkpoint_dir;
  int checkpoint_every = 0;
};

struct SlReport {
  std::vector<double> epoch_loss;  // mean BCE per instance
};

// Per step: sample an instance, t ~ U{1..T}, corrupt the label through the
// forward chain, descend the BCE surrogate. Throws on non-finite loss.
SlReport sl_train(DenoiserNetwork& net, const std::vector<LabeledInstance>& instances,
                  const DiffusionSchedule& schedule, const SlHyper& hyper);

struct SamplerTrajectory {
  std::vector<int> taus;  // tau_0 = 0 < tau_1 < ... < tau_{T'} = T

  int hops() const { return static_cast<int>(taus.size()) - 1; }
  void validate(int t_max) const;
};

SamplerTrajectory uniform_trajectory(int t_max, int hops);

// Skipped reverse sampling (compound kernels between consecutive taus) with
// a deterministic top-M on the final clean probabilities, ties broken by
// ascending port index.
PortMask select_ports(const DenoiserModel& model, const MatXcd& channel,
                      const DiffusionSchedule& schedule, const SamplerTrajectory& trajectory,
                      int m, std::uint64_t seed);

struct RlHyper {
  int candidates = 8;  // parallel rollouts per instance
  double lr = 1e-4;
  int epochs = 100;
  std::uint64_t seed = 0;
  int traj_hops = 10;
  int threads = 0;
};

struct RlReport {
  std::vector<double> epoch_mean_best_reward;
  int updates = 0;   // positive-advantage steps taken
  int skipped = 0;   // instances where no candidate beat the baseline
};

// Best-of-C self-training: draw C masks per instance, update on the best one
// when it beats the running AO baseline (advantage-weighted BCE); baselines
// are raised to the best reward seen after each epoch.
RlReport rl_finetune(DenoiserNetwork& net, const std::vector<LabeledInstance>& instances,
                     const DiffusionSchedule& schedule, const RlHyper& hyper);

}  // namespace fas
