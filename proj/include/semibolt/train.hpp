#pragma once

#include "semibolt/losses.hpp"
#include "semibolt/problems.hpp"

// Adam, learning-rate schedules, the pretrain-then-correct forward workflow
// and the joint inverse workflow with a trainable scattering coefficient.

namespace semibolt::train {

struct AdamState {
  Vec m, v;
  long step_count = 0;
  double beta1 = 0.9, beta2 = 0.999, eps_adam = 1e-8;
};

// Standard bias-corrected Adam on a flat parameter vector.
void adam_step(AdamState& st, std::span<double> params,
               std::span<const double> grad, double lr);

struct LrSchedule {
  enum class Kind { kConstant, kStepDecay };
  Kind kind = Kind::kConstant;
  double base_lr = 1e-4;
  double decay_factor = 0.8;
  long decay_interval = 1000;
  double floor = 1e-6;
};

double lr_at(const LrSchedule& s, long epoch);

struct TrainingLogRow {
  long epoch = 0;
  loss::LossBreakdown lb;
  double lr = 0.0, sigma = 0.0, rel_error = 0.0, wall_s = 0.0;
};

struct TrainingLog {
  std::vector<TrainingLogRow> rows;
};

struct ArchSpec {
  int hidden_layers = 4;
  int neurons = 128;
};

struct TrainSpec {
  nn::Method method = nn::Method::kBiImplicit;
  double eps = 1e-8;
  ArchSpec rho, diff, corr, g;
  ArchSpec phi{14, 128};
  long epochs = 20000;
  long pretrain_epochs = 20000;
  LrSchedule schedule;
  LrSchedule pretrain_schedule;
  uint64_t seed = 0;
  int rel_log_interval = 100;
  double divergence_guard = 1e6;
  loss::DiffusionVariant diffusion_variant = loss::DiffusionVariant::kV1;
  loss::PenaltyWeights weights;
  int colloc_nt = 20;
  int colloc_nx = 99;
};

// Fresh Xavier-initialized networks for the method (plus phi when the
// potential is latent). Per-net seeds are derived from spec.seed.
nn::NetworkBundle make_bundle(const TrainSpec& spec, bool with_phi);

double relative_l2_error(std::span<const double> pred,
                         std::span<const double> ref);

struct ForwardResult {
  nn::NetworkBundle bundle;
  TrainingLog log;           // correction / main stage
  TrainingLog pretrain_log;  // low-fidelity stage (bi methods)
  double rel_error_rho = 0.0;
  double rel_error_phi = 0.0;
};

ForwardResult train_forward(const TrainSpec& spec, const problems::Setup& setup,
                            const classic::ReferenceRun& reference,
                            const classic::SpatialGrid& grid,
                            const spectral::HermiteBasis& basis);

struct InverseResult {
  double sigma_hat = 0.0;
  nn::NetworkBundle bundle;
  TrainingLog log;
};

InverseResult train_inverse(const TrainSpec& spec,
                            const problems::Setup& setup,
                            const loss::ObservationSet& obs, double sigma0,
                            const classic::ReferenceRun* reference,
                            const classic::SpatialGrid& grid,
                            const spectral::HermiteBasis& basis);

}  // namespace semibolt::train
