#pragma once

#include <functional>
#include <memory>

#include "semibolt/common.hpp"
#include "semibolt/hermite.hpp"
#include "semibolt/net.hpp"
#include "semibolt/reference.hpp"
#include "semibolt/tape.hpp"

// Collocation grids and the empirical physics-informed losses: the kinetic
// residual loss, the micro-macro losses (single- and bi-fidelity density),
// the two diffusion pre-training losses, boundary/initial penalties with the
// quadrature-weighted inflow sum, data-misfit terms and the Poisson penalty.
//
// The scattering kernel handled here is a constant sigma (optionally a
// trainable scalar); the spectral layer keeps the general kernel machinery.

namespace semibolt::loss {

struct CollocationSet {
  int nt = 0, nxi = 0, nv = 0;
  double t_final = 0.1;
  double x_left = 0.0, x_right = 1.0;
  RowMatrix interior_tx;  // 2 x (nt * nxi), rows t then x
  Vec times;              // nt levels, excludes t = 0
  Vec x_interior;         // nxi points, excludes both ends

  int n1() const { return interior_tx.cols; }          // macro interior
  int n2() const { return interior_tx.cols * nv; }     // kinetic interior
  int n3() const { return nt * nv; }                    // inflow boundary
  int n4() const { return nxi * nv; }                   // initial
};

CollocationSet build_collocation(const spectral::HermiteBasis& basis,
                                 int nt = 20, int nx_interior = 99,
                                 double t_final = 0.1, double x_min = 0.0,
                                 double x_max = 1.0);

struct PenaltyWeights {
  double lambda1 = 1.0, lambda2 = 1.0;
  double lambda1_diff = 1.0, lambda2_diff = 1.0;
  double w_data_rho = 1.0, w_data_phi = 1.0;
  double w_poisson = 1.0;
};

struct LossBreakdown {
  double macro = 0.0, micro = 0.0, bc = 0.0, ic = 0.0, diffusion = 0.0,
         data_rho = 0.0, data_phi = 0.0, poisson = 0.0, total = 0.0;
};

struct ObservationSet {
  RowMatrix rho_points;  // 2 x N_d1
  Vec rho_values;
  RowMatrix phi_points;  // 2 x N_d2, may be empty
  Vec phi_values;
  uint64_t seed = 0;
};

// Noiseless by default; noise > 0 adds centered Gaussian perturbations.
ObservationSet make_observations(const classic::ReferenceRun& run,
                                 const classic::SpatialGrid& grid, int n_rho,
                                 int n_phi, uint64_t seed, double noise = 0.0);

// Potential entering the losses: an analytic field (given-potential problem)
// or the dedicated network (Poisson-coupled problem).
struct PhiSpec {
  const nn::DenseNet* net = nullptr;
  classic::PotentialField analytic;
  bool is_net() const { return net != nullptr; }
};

enum class DiffusionVariant { kV1, kV2 };

using VelocityProfile = std::function<double(double)>;

struct BuildOptions {
  nn::Method method = nn::Method::kApnn;
  double eps = 1.0;

  bool include_model = true;      // kinetic/micro-macro residual + bc/ic
  bool bc_ic_only = false;        // with include_model: skip interior residuals
  bool include_diffusion = false;
  DiffusionVariant diffusion_variant = DiffusionVariant::kV1;
  bool include_data_rho = false;
  bool include_data_phi = false;
  bool include_poisson = false;

  bool sigma_trainable = false;  // softplus(bundle.sigma_raw); else fixed
  double sigma_fixed = 2.0;

  VelocityProfile f_bc;  // inflow data over v; default Maxwellian
  VelocityProfile f_ic;  // initial data over v; default Maxwellian

  // Poisson-coupled settings (include_poisson)
  double poisson_beta = 0.0;
  double poisson_bias = 0.0;
  std::function<double(double)> doping;
};

// A loss recorded once over static collocation data; forward()/gradient()
// then run allocation-free every epoch.
class TrainingProgram {
 public:
  TrainingProgram(nn::NetworkBundle& bundle, const BuildOptions& opts,
                  const CollocationSet& colloc,
                  const spectral::HermiteBasis& basis,
                  const PenaltyWeights& weights, const PhiSpec& phi,
                  const ObservationSet* obs);

  LossBreakdown eval();
  // forward + backward; gradient laid out per trainable_blocks()
  LossBreakdown eval_grad(Vec& grad);

  struct Block {
    std::string name;
    double* data;
    size_t count;
  };
  const std::vector<Block>& trainable_blocks() const { return blocks_; }
  size_t trainable_count() const;

  double sigma_value() const;

  // per-point interior residual values from the last eval (diagnostics and
  // the limit-system identity checks)
  Vec macro_residuals() const;
  Vec micro_residuals() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  std::vector<Block> blocks_;
};

// ---- one-shot functional forms ----------------------------------------------

LossBreakdown pinn_loss(nn::NetworkBundle& bundle, double eps, double sigma,
                        const PhiSpec& phi, const CollocationSet& colloc,
                        const spectral::HermiteBasis& basis,
                        const PenaltyWeights& weights);

LossBreakdown apnn_loss(nn::NetworkBundle& bundle, double eps, double sigma,
                        const PhiSpec& phi, const CollocationSet& colloc,
                        const spectral::HermiteBasis& basis,
                        const PenaltyWeights& weights);

LossBreakdown biapnn_loss(nn::NetworkBundle& bundle, nn::Method mode,
                          double eps, double sigma, const PhiSpec& phi,
                          const CollocationSet& colloc,
                          const spectral::HermiteBasis& basis,
                          const PenaltyWeights& weights);

LossBreakdown diffusion_loss(nn::NetworkBundle& bundle, DiffusionVariant v,
                             double sigma, const PhiSpec& phi,
                             const CollocationSet& colloc,
                             const spectral::HermiteBasis& basis,
                             const PenaltyWeights& weights);

std::pair<double, double> bc_ic_loss(nn::NetworkBundle& bundle,
                                     nn::Method method, double eps,
                                     const CollocationSet& colloc,
                                     const spectral::HermiteBasis& basis,
                                     const PenaltyWeights& weights,
                                     const VelocityProfile& f_bc,
                                     const VelocityProfile& f_ic);

std::pair<double, double> data_loss(nn::NetworkBundle& bundle,
                                    nn::Method method, double eps,
                                    const ObservationSet& obs,
                                    const PenaltyWeights& weights);

double poisson_residual_loss(nn::NetworkBundle& bundle, nn::Method method,
                             double eps, double beta, double bias,
                             const std::function<double(double)>& doping,
                             const CollocationSet& colloc,
                             const spectral::HermiteBasis& basis,
                             const PenaltyWeights& weights);

// sigma is taken from bundle.sigma_raw (trainable); bi modes add the v1
// diffusion loss as regularizer, the plain micro-macro mode adds data only.
LossBreakdown total_inverse_loss(nn::NetworkBundle& bundle, nn::Method mode,
                                 double eps, const PhiSpec& phi,
                                 const CollocationSet& colloc,
                                 const spectral::HermiteBasis& basis,
                                 const PenaltyWeights& weights,
                                 const ObservationSet& obs,
                                 const BuildOptions* poisson_opts = nullptr);

}  // namespace semibolt::loss
