#pragma once

#include <string>

#include "semibolt/common.hpp"

// Flat key=value experiment configuration with strict validation: unknown
// keys are rejected by name, every field is typed, defaults reproduce the
// published experiment settings.

namespace semibolt::cli {

struct ExperimentConfig {
  std::string problem = "problem1";  // problem1 | problem2
  std::string method = "bi_implicit"; // pinn|apnn|bi_explicit|bi_implicit|
                                      // reference|drift_diffusion
  double eps = 1.0;
  double sigma_true = 2.0;

  int hidden_layers = 4;
  int neurons = 128;
  int rho_hidden_layers = -1, rho_neurons = -1;   // -1: inherit base
  int diff_hidden_layers = -1, diff_neurons = -1;
  int corr_hidden_layers = -1, corr_neurons = -1;
  int g_hidden_layers = -1, g_neurons = -1;
  int phi_hidden_layers = 14, phi_neurons = 128;

  std::string diffusion_variant = "auto";  // auto | v1 | v2

  long epochs = 20000;
  long pretrain_epochs = 20000;
  double lr = 1e-4;
  std::string lr_schedule = "auto";  // auto | constant | step_decay
  double lr_decay_factor = 0.8;
  long lr_decay_interval = 1000;
  double lr_floor = 1e-6;

  uint64_t seed = 0;

  int n_obs_rho = 100;
  int n_obs_phi = 100;
  double obs_noise = 0.0;
  uint64_t obs_seed = 777;
  Vec sigma0_list{0.5, 1.0, 1.5, 1.7, 1.9};

  int nv = 8;
  int hermite_order = -1;  // -1: nv - 1
  int colloc_nt = 20;
  int colloc_nx = 99;

  double ref_dx = 0.01;
  double ref_dt = 0.005;
  double t_final = 0.1;

  int rel_log_interval = 100;
  double divergence_guard = 1e6;

  double lambda1 = 1.0, lambda2 = 1.0;
  double lambda1_diff = 1.0, lambda2_diff = 1.0;
  double w_data_rho = 1.0, w_data_phi = 1.0, w_poisson = 1.0;

  double beta = 0.002;
  double bias_v = 5.0;

  std::string out_dir = "out";
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// Canonical serialization of the effective settings; its FNV-1a hash keys
// every emitted artifact back to the configuration that produced it.
std::string canonical_text(const ExperimentConfig& c);
std::string config_hash(const ExperimentConfig& c);

void validate(const ExperimentConfig& c);

}  // namespace semibolt::cli
