// Flow-matching prior over real-equivalent channel vectors: straight-line
// interpolation path, conditional-velocity regression training, and
// unconditional sampling by Euler integration from t=1 to t=0.
#pragma once

#include <filesystem>
#include <memory>

#include "fas/dataset.hpp"
#include "fas/nn/checkpoint.hpp"

namespace fas {

// z_t = (1-t) h + t z1.
VecXd ot_interpolate(const VecXd& h, const VecXd& z1, double t);

// Time derivative of the path; constant in t.
VecXd cond_velocity(const VecXd& h, const VecXd& z1);

// Velocity-field abstraction so samplers and the estimator can run against
// either the trained network or closed-form test fields.
struct VelocityModel {
  virtual ~VelocityModel() = default;
  virtual VecXd velocity(const VecXd& z, double t) const = 0;
  virtual int dim() const = 0;
};

struct CfmBatch {
  MatXd h;   // dim x B
  MatXd z1;  // dim x B
  VecXd t;   // B
};

// Mean over the batch of || v(z_t, t) - (z1 - h) ||_2^2.
double cfm_minibatch_loss(const VelocityModel& model, const CfmBatch& batch);

struct TrainHyper {
  int batch = 64;
  double lr = 1e-4;
  double final_lr_fraction = 1.0;  // cosine decay down to lr * fraction
  int epochs = 100;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware default
  // Resample each drawn channel through exact invariances of the synthetic
  // law (global phase rotation, axis mirrors). Leaves the target
  // distribution unchanged; only valid for data with those symmetries.
  bool symmetry_augment = false;
  std::filesystem::path checkpoint_dir;
  int checkpoint_every = 0;  // 0 = final only (when dir set)
};

struct TrainReport {
  std::vector<double> epoch_loss;
};

// Trained velocity network over a fixed geometry. Input/output are
// real-equivalent vectors of length 2N.
class VelocityNetwork : public VelocityModel {
 public:
  VelocityNetwork(const Geometry& geom, const std::array<int, 3>& widths, int emb_dim,
                  std::uint64_t init_seed);
  explicit VelocityNetwork(nn::UNet net, Geometry geom);

  VecXd velocity(const VecXd& z, double t) const override;
  int dim() const override { return 2 * geom_.ports(); }
  const Geometry& geometry() const { return geom_; }
  nn::UNet& net() { return net_; }
  const nn::UNet& net() const { return net_; }

  void save(const std::filesystem::path& stem, std::uint64_t seed, int epoch) const;
  static VelocityNetwork load(const std::filesystem::path& stem);

 private:
  Geometry geom_;
  nn::UNet net_;
};

// Algorithm: repeatedly draw (h, t, z1), build z_t, regress the network onto
// z1 - h, and take Adam steps. Deterministic given hyper.seed up to the
// backend's reduction order. Throws on non-finite loss.
TrainReport train_prior(const Dataset& dataset, const TrainHyper& hyper, VelocityNetwork& net);

// Euler integration of dz/dt = v(z, t) from a seeded Gaussian start at t=1
// down to t=0 with step 1/nfe.
VecXd sample_unconditional(const VelocityModel& model, int nfe, std::uint64_t seed);

}  // namespace fas
