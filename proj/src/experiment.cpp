#include "semibolt/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nlohmann/json.hpp"

namespace semibolt::cli {

namespace {

using nn::Method;

Method method_from(const std::string& m) {
  if (m == "pinn") return Method::kPinn;
  if (m == "apnn") return Method::kApnn;
  if (m == "bi_explicit") return Method::kBiExplicit;
  if (m == "bi_implicit") return Method::kBiImplicit;
  throw std::invalid_argument("not a trainable method: " + m);
}

train::ArchSpec arch(int hidden, int neurons, const ExperimentConfig& c) {
  train::ArchSpec a;
  a.hidden_layers = hidden >= 0 ? hidden : c.hidden_layers;
  a.neurons = neurons >= 0 ? neurons : c.neurons;
  return a;
}

train::TrainSpec make_spec(const ExperimentConfig& c, bool inverse) {
  train::TrainSpec s;
  s.method = method_from(c.method);
  s.eps = c.eps;
  s.rho = arch(c.rho_hidden_layers, c.rho_neurons, c);
  s.diff = arch(c.diff_hidden_layers, c.diff_neurons, c);
  s.corr = arch(c.corr_hidden_layers, c.corr_neurons, c);
  s.g = arch(c.g_hidden_layers, c.g_neurons, c);
  s.phi = arch(c.phi_hidden_layers, c.phi_neurons, c);
  s.epochs = c.epochs;
  s.pretrain_epochs = c.pretrain_epochs;

  train::LrSchedule sched;
  bool step = c.lr_schedule == "step_decay" ||
              (c.lr_schedule == "auto" && inverse);
  sched.kind = step ? train::LrSchedule::Kind::kStepDecay
                    : train::LrSchedule::Kind::kConstant;
  sched.base_lr = c.lr;
  sched.decay_factor = c.lr_decay_factor;
  sched.decay_interval = c.lr_decay_interval;
  sched.floor = c.lr_floor;
  s.schedule = sched;
  s.pretrain_schedule.kind = train::LrSchedule::Kind::kConstant;
  s.pretrain_schedule.base_lr = c.lr;

  s.seed = c.seed;
  s.rel_log_interval = c.rel_log_interval;
  s.divergence_guard = c.divergence_guard;
  bool p2 = c.problem == "problem2";
  if (c.diffusion_variant == "v1")
    s.diffusion_variant = loss::DiffusionVariant::kV1;
  else if (c.diffusion_variant == "v2")
    s.diffusion_variant = loss::DiffusionVariant::kV2;
  else
    s.diffusion_variant =
        (p2 && !inverse) ? loss::DiffusionVariant::kV2
                         : loss::DiffusionVariant::kV1;
  s.weights.lambda1 = c.lambda1;
  s.weights.lambda2 = c.lambda2;
  s.weights.lambda1_diff = c.lambda1_diff;
  s.weights.lambda2_diff = c.lambda2_diff;
  s.weights.w_data_rho = c.w_data_rho;
  s.weights.w_data_phi = c.w_data_phi;
  s.weights.w_poisson = c.w_poisson;
  s.colloc_nt = c.colloc_nt;
  s.colloc_nx = c.colloc_nx;
  return s;
}

problems::Setup make_setup(const ExperimentConfig& c) {
  problems::Setup s = c.problem == "problem2"
                          ? problems::problem2(c.beta, c.bias_v)
                          : problems::problem1();
  s.sigma_true = c.sigma_true;
  s.t_final = c.t_final;
  return s;
}

}  // namespace

ResultsBundle run_experiment(const ExperimentConfig& cfg, RunMode mode) {
  validate(cfg);
  auto t_start = std::chrono::steady_clock::now();

  ResultsBundle out;
  out.cfg = cfg;
  out.mode = mode;
  out.hash = config_hash(cfg);

  const int order =
      cfg.hermite_order >= 0 ? cfg.hermite_order : cfg.nv - 1;
  spectral::HermiteBasis basis = spectral::build_basis(order, cfg.nv);
  problems::Setup setup = make_setup(cfg);
  int nx = static_cast<int>(std::llround((setup.x_max - setup.x_min) /
                                         cfg.ref_dx)) + 1;
  classic::SpatialGrid grid = classic::make_grid(setup.x_min, setup.x_max, nx);
  out.x_nodes = grid.nodes;

  // every mode needs the classical solution: as the artifact itself, as the
  // error reference, or as the observation source
  classic::ReferenceRun ref;
  if (cfg.method == "drift_diffusion") {
    double t_coef = spectral::diffusion_coefficient_t(
        [&](double, double) { return cfg.sigma_true; }, basis);
    auto traj = classic::solve_drift_diffusion(
        t_coef, setup.potential, grid, cfg.ref_dt, cfg.t_final,
        Vec(grid.nx, 1.0), {1.0, 1.0});
    ref.rho = traj;
    ref.times.resize(traj.size());
    for (size_t i = 0; i < traj.size(); ++i) ref.times[i] = i * cfg.ref_dt;
  } else {
    classic::ReferenceProblem rp =
        problems::reference_problem(setup, grid, basis);
    ref = classic::run_reference(rp, cfg.eps, grid, cfg.ref_dt, cfg.t_final,
                                 basis);
  }

  if (mode == RunMode::kReference || cfg.method == "reference" ||
      cfg.method == "drift_diffusion") {
    out.mode = RunMode::kReference;
    out.has_trajectory = true;
    out.trajectory = ref;
    out.rho_final = ref.rho.back();
    if (!ref.phi.empty()) out.phi_final = ref.phi.back();
    out.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      t_start)
            .count();
    return out;
  }

  if (mode == RunMode::kForward) {
    train::TrainSpec spec = make_spec(cfg, false);
    train::ForwardResult fr =
        train::train_forward(spec, setup, ref, grid, basis);
    out.log = std::move(fr.log);
    out.rel_error_rho = fr.rel_error_rho;
    out.rel_error_phi = setup.problem == problems::Problem::kProblem2
                            ? fr.rel_error_phi
                            : -1.0;
    RowMatrix tx(2, grid.nx);
    for (int i = 0; i < grid.nx; ++i) {
      tx(0, i) = cfg.t_final;
      tx(1, i) = grid.nodes[i];
    }
    out.rho_final =
        nn::rho_from_bundle(fr.bundle, spec.method, cfg.eps, tx).value;
    if (fr.bundle.phi) {
      RowMatrix pm = nn::mlp_forward(*fr.bundle.phi, tx);
      out.phi_final = pm.data;
    }
    out.epochs_run = cfg.epochs;
  } else {
    // synthesize data from the reference, then fit from each initial guess
    train::TrainSpec spec = make_spec(cfg, true);
    int n_phi = setup.problem == problems::Problem::kProblem2 ? cfg.n_obs_phi
                                                              : 0;
    loss::ObservationSet obs = loss::make_observations(
        ref, grid, cfg.n_obs_rho, n_phi, cfg.obs_seed, cfg.obs_noise);

    out.sigma0_list = cfg.sigma0_list;
    double mean = 0.0;
    for (size_t k = 0; k < cfg.sigma0_list.size(); ++k) {
      train::InverseResult ir = train::train_inverse(
          spec, setup, obs, cfg.sigma0_list[k], &ref, grid, basis);
      out.sigma_hats.push_back(ir.sigma_hat);
      mean += ir.sigma_hat;
      Vec traj(ir.log.rows.size());
      for (size_t e = 0; e < ir.log.rows.size(); ++e)
        traj[e] = ir.log.rows[e].sigma;
      out.sigma_trajectories.push_back(std::move(traj));
      if (k == 0) {
        out.log = std::move(ir.log);
        RowMatrix tx(2, grid.nx);
        for (int i = 0; i < grid.nx; ++i) {
          tx(0, i) = cfg.t_final;
          tx(1, i) = grid.nodes[i];
        }
        out.rho_final =
            nn::rho_from_bundle(ir.bundle, spec.method, cfg.eps, tx).value;
        out.rel_error_rho =
            train::relative_l2_error(out.rho_final, ref.rho.back());
      }
    }
    out.sigma_hat = mean / static_cast<double>(cfg.sigma0_list.size());
    out.epochs_run = cfg.epochs;
  }

  out.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return out;
}

namespace {

void write_csv_header(std::ofstream& f, const char* header) {
  f << header << "\n";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::string> emit_results(const ResultsBundle& b,
                                      const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> manifest;
  auto open = [&](const std::string& name) {
    std::ofstream f(dir + "/" + name);
    if (!f.good())
      throw numerical_error("emit_results: cannot write " + dir + "/" + name);
    manifest.push_back(name);
    return f;
  };

  if (!b.rho_final.empty()) {
    auto f = open("rho_final.csv");
    write_csv_header(f, "x,rho");
    for (size_t i = 0; i < b.rho_final.size(); ++i)
      f << fmt(b.x_nodes[i]) << "," << fmt(b.rho_final[i]) << "\n";
  }
  if (!b.phi_final.empty()) {
    auto f = open("phi_final.csv");
    write_csv_header(f, "x,phi");
    for (size_t i = 0; i < b.phi_final.size(); ++i)
      f << fmt(b.x_nodes[i]) << "," << fmt(b.phi_final[i]) << "\n";
  }
  if (!b.log.rows.empty()) {
    auto f = open("loss_history.csv");
    write_csv_header(
        f,
        "epoch,macro,micro,bc,ic,diffusion,data_rho,data_phi,poisson,total,"
        "lr,sigma,rel_error");
    for (const auto& r : b.log.rows) {
      f << r.epoch << "," << fmt(r.lb.macro) << "," << fmt(r.lb.micro) << ","
        << fmt(r.lb.bc) << "," << fmt(r.lb.ic) << "," << fmt(r.lb.diffusion)
        << "," << fmt(r.lb.data_rho) << "," << fmt(r.lb.data_phi) << ","
        << fmt(r.lb.poisson) << "," << fmt(r.lb.total) << "," << fmt(r.lr)
        << "," << fmt(r.sigma) << "," << fmt(r.rel_error) << "\n";
    }
  }
  if (!b.sigma_trajectories.empty()) {
    auto f = open("sigma_trajectory.csv");
    std::string header = "epoch";
    for (double s0 : b.sigma0_list) {
      char buf[32];
      std::snprintf(buf, sizeof buf, ",sigma_%g", s0);
      header += buf;
    }
    header += ",mean";
    write_csv_header(f, header.c_str());
    size_t rows = b.sigma_trajectories.front().size();
    for (size_t e = 0; e < rows; ++e) {
      f << e;
      double m = 0.0;
      for (const auto& tr : b.sigma_trajectories) {
        f << "," << fmt(tr[e]);
        m += tr[e];
      }
      f << "," << fmt(m / static_cast<double>(b.sigma_trajectories.size()))
        << "\n";
    }
  }
  if (b.has_trajectory) {
    {
      auto f = open("trajectory_rho.csv");
      bool with_phi = !b.trajectory.phi.empty();
      write_csv_header(f, with_phi ? "t,x,rho,phi" : "t,x,rho");
      for (size_t lev = 0; lev < b.trajectory.times.size(); ++lev)
        for (size_t i = 0; i < b.x_nodes.size(); ++i) {
          f << fmt(b.trajectory.times[lev]) << "," << fmt(b.x_nodes[i]) << ","
            << fmt(b.trajectory.rho[lev][i]);
          if (with_phi) f << "," << fmt(b.trajectory.phi[lev][i]);
          f << "\n";
        }
    }
    if (!b.trajectory.g.empty()) {
      auto f = open("trajectory_g.csv");
      write_csv_header(f, "t,x,v,g");
      // node values of g itself (psi * M)
      const auto& any = b.trajectory.g.front();
      int nv = any.cols;
      Vec vm(nv), mm(nv);
      // velocity nodes are not stored in the bundle; recover from column
      // count via a fresh basis of the same size
      spectral::HermiteBasis basis = spectral::build_basis(0, nv);
      for (int j = 0; j < nv; ++j) {
        vm[j] = basis.nodes[j];
        mm[j] = basis.maxwellian_at_nodes[j];
      }
      for (size_t lev = 0; lev < b.trajectory.times.size(); ++lev)
        for (size_t i = 0; i < b.x_nodes.size(); ++i)
          for (int j = 0; j < nv; ++j)
            f << fmt(b.trajectory.times[lev]) << "," << fmt(b.x_nodes[i])
              << "," << fmt(vm[j]) << ","
              << fmt(b.trajectory.g[lev](static_cast<int>(i), j) * mm[j])
              << "\n";
    }
  }

  {
    auto f = open("summary.json");
    nlohmann::json j;
    j["config_hash"] = b.hash;
    j["problem"] = b.cfg.problem;
    j["method"] = b.cfg.method;
    j["eps"] = b.cfg.eps;
    if (b.rel_error_rho >= 0.0) j["rel_error_rho"] = b.rel_error_rho;
    if (b.rel_error_phi >= 0.0) j["rel_error_phi"] = b.rel_error_phi;
    if (b.sigma_hat >= 0.0) {
      j["sigma_hat"] = b.sigma_hat;
      j["sigma_hats"] = b.sigma_hats;
    }
    j["epochs"] = b.epochs_run;
    j["wall_time_s"] = b.wall_time_s;
    f << j.dump(2) << "\n";
  }
  return manifest;
}

}  // namespace semibolt::cli
