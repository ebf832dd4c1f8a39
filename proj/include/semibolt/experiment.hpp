#pragma once

#include "semibolt/config.hpp"
#include "semibolt/train.hpp"

namespace semibolt::cli {

enum class RunMode { kForward, kInverse, kReference };

struct ResultsBundle {
  ExperimentConfig cfg;
  RunMode mode = RunMode::kForward;
  std::string hash;

  Vec x_nodes;
  Vec rho_final;
  Vec phi_final;  // empty unless available
  double rel_error_rho = -1.0;
  double rel_error_phi = -1.0;

  double sigma_hat = -1.0;              // inverse: mean over initial guesses
  Vec sigma0_list;
  std::vector<Vec> sigma_trajectories;  // per guess, one value per epoch
  Vec sigma_hats;                       // per guess

  train::TrainingLog log;  // forward: main stage; inverse: first-guess run

  bool has_trajectory = false;  // reference runs carry full trajectories
  classic::ReferenceRun trajectory;

  long epochs_run = 0;
  double wall_time_s = 0.0;
};

// Dispatches to the reference solvers or the training workflows. Inverse
// runs synthesize observations from a reference run with sigma_true first,
// then estimate sigma from every initial guess in the configured list.
ResultsBundle run_experiment(const ExperimentConfig& cfg, RunMode mode);

// Writes rho_final.csv, loss_history.csv, summary.json and, when present,
// phi_final.csv / sigma_trajectory.csv / trajectory CSVs. Returns the list
// of files written.
std::vector<std::string> emit_results(const ResultsBundle& bundle,
                                      const std::string& dir);

}  // namespace semibolt::cli
