// Command-line driver: forward and inverse training runs, classical
// reference solutions, epsilon sweeps and result comparison tables.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"
#include "semibolt/experiment.hpp"

namespace {

using namespace semibolt;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  long seed = -1;
  double eps = 0.0;
  std::string method;
  CLI::Option* eps_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required = true) {
  auto* copt = cmd->add_option("--config", a.config_path, "config file");
  if (config_required) copt->required();
  cmd->add_option("--out", a.out_dir, "output directory");
  a.seed_opt = cmd->add_option("--seed", a.seed, "override seed");
  a.eps_opt = cmd->add_option("--eps", a.eps, "override Knudsen number");
  cmd->add_option("--method", a.method, "override method");
}

cli::ExperimentConfig effective_config(const CommonArgs& a) {
  cli::ExperimentConfig cfg = a.config_path.empty()
                                  ? cli::ExperimentConfig{}
                                  : cli::load_config(a.config_path);
  if (a.seed_opt && a.seed_opt->count() > 0)
    cfg.seed = static_cast<uint64_t>(a.seed);
  if (a.eps_opt && a.eps_opt->count() > 0) cfg.eps = a.eps;
  if (!a.method.empty()) cfg.method = a.method;
  if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
  cli::validate(cfg);
  return cfg;
}

int run_mode(const CommonArgs& a, cli::RunMode mode) {
  cli::ExperimentConfig cfg = effective_config(a);
  cli::ResultsBundle res = cli::run_experiment(cfg, mode);
  auto files = cli::emit_results(res, cfg.out_dir);
  std::cout << "wrote " << cfg.out_dir << "/{";
  for (size_t i = 0; i < files.size(); ++i)
    std::cout << (i ? "," : "") << files[i];
  std::cout << "}\n";
  if (res.rel_error_rho >= 0)
    std::cout << "rel_error_rho = " << res.rel_error_rho << "\n";
  if (res.rel_error_phi >= 0)
    std::cout << "rel_error_phi = " << res.rel_error_phi << "\n";
  if (res.sigma_hat >= 0) std::cout << "sigma_hat = " << res.sigma_hat << "\n";
  return 0;
}

int run_sweep(const CommonArgs& a, const std::vector<double>& eps_grid,
              const std::string& mode_name) {
  cli::ExperimentConfig base = effective_config(a);
  cli::RunMode mode =
      mode_name == "inverse" ? cli::RunMode::kInverse : cli::RunMode::kForward;
  for (double eps : eps_grid) {
    cli::ExperimentConfig cfg = base;
    cfg.eps = eps;
    char sub[64];
    std::snprintf(sub, sizeof sub, "%s/eps_%g", base.out_dir.c_str(), eps);
    cfg.out_dir = sub;
    cli::ResultsBundle res = cli::run_experiment(cfg, mode);
    cli::emit_results(res, cfg.out_dir);
    std::cout << "eps=" << eps;
    if (res.rel_error_rho >= 0)
      std::cout << "  rel_error_rho=" << res.rel_error_rho;
    if (res.sigma_hat >= 0) std::cout << "  sigma_hat=" << res.sigma_hat;
    std::cout << "\n";
  }
  return 0;
}

int run_compare(const std::vector<std::string>& summaries) {
  std::cout << "problem,method,eps,rel_error_rho,rel_error_phi,sigma_hat,"
               "config_hash\n";
  for (const auto& path : summaries) {
    std::ifstream in(path);
    if (!in.good()) {
      std::cerr << "cannot open " << path << "\n";
      return 2;
    }
    nlohmann::json j;
    in >> j;
    auto field = [&](const char* k) -> std::string {
      if (!j.contains(k)) return "";
      if (j[k].is_string()) return j[k].get<std::string>();
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.8g", j[k].get<double>());
      return buf;
    };
    std::cout << field("problem") << "," << field("method") << ","
              << field("eps") << "," << field("rel_error_rho") << ","
              << field("rel_error_phi") << "," << field("sigma_hat") << ","
              << field("config_hash") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiscale kinetic transport: neural and classical solvers"};
  app.require_subcommand(1);

  CommonArgs fwd_args, inv_args, ref_args, sweep_args;
  std::vector<double> eps_grid;
  std::string sweep_mode = "forward";
  std::vector<std::string> summaries;

  auto* fwd = app.add_subcommand("forward", "train a forward surrogate");
  add_common(fwd, fwd_args);
  auto* inv = app.add_subcommand("inverse", "estimate the scattering coefficient");
  add_common(inv, inv_args);
  auto* ref = app.add_subcommand("reference", "classical reference solution");
  add_common(ref, ref_args, false);
  auto* sweep = app.add_subcommand("sweep", "run a grid of Knudsen numbers");
  add_common(sweep, sweep_args);
  sweep->add_option("--eps-grid", eps_grid, "epsilon values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--mode", sweep_mode, "forward or inverse");
  auto* cmp = app.add_subcommand("compare", "tabulate summary.json files");
  cmp->add_option("summaries", summaries, "summary.json paths")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fwd->parsed()) return run_mode(fwd_args, semibolt::cli::RunMode::kForward);
    if (inv->parsed()) return run_mode(inv_args, semibolt::cli::RunMode::kInverse);
    if (ref->parsed()) {
      if (ref_args.method.empty()) ref_args.method = "reference";
      return run_mode(ref_args, semibolt::cli::RunMode::kReference);
    }
    if (sweep->parsed()) return run_sweep(sweep_args, eps_grid, sweep_mode);
    if (cmp->parsed()) return run_compare(summaries);
  } catch (const semibolt::divergence_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const semibolt::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
