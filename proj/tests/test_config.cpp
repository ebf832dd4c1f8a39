#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "nlohmann/json.hpp"
#include "semibolt/experiment.hpp"

using namespace semibolt;
using cli::ExperimentConfig;

TEST_CASE("minimal config is filled with the published defaults") {
  ExperimentConfig c = cli::parse_config_text(
      "problem=problem1\nmethod=bi_implicit\neps=1e-8\n");
  CHECK(c.problem == "problem1");
  CHECK(c.method == "bi_implicit");
  CHECK(c.eps == 1e-8);
  CHECK(c.hidden_layers == 4);
  CHECK(c.neurons == 128);
  CHECK(c.epochs == 20000);
  CHECK(c.lr == 1e-4);
  CHECK(c.nv == 8);
  CHECK(c.seed == 0);
  CHECK(c.colloc_nt == 20);
  CHECK(c.colloc_nx == 99);
  CHECK(c.sigma_true == 2.0);
  CHECK(c.lambda1 == 1.0);
  CHECK(c.lambda2 == 1.0);
  REQUIRE(c.sigma0_list.size() == 5);
  CHECK(c.sigma0_list[0] == 0.5);
  CHECK(c.sigma0_list[4] == 1.9);
  CHECK(c.beta == 0.002);
  CHECK(c.bias_v == 5.0);
}

TEST_CASE("validation rejects hostile inputs by name") {
  CHECK_THROWS_WITH_AS(cli::parse_config_text("fo=bar\n"),
                       doctest::Contains("unknown key 'fo'"),
                       std::invalid_argument);
  CHECK_THROWS_AS(cli::parse_config_text("eps=0\n"), std::invalid_argument);
  CHECK_THROWS_AS(cli::parse_config_text("eps=-1\n"), std::invalid_argument);
  CHECK_THROWS_AS(cli::parse_config_text("method=magic\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(cli::parse_config_text("epochs=-5\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(cli::parse_config_text("eps=abc\n"), std::invalid_argument);
  CHECK_THROWS_AS(cli::parse_config_text("hermite_order=9\nnv=8\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      cli::parse_config_text("method=drift_diffusion\nproblem=problem2\n"),
      std::invalid_argument);
  // comments and blank lines pass through
  ExperimentConfig ok = cli::parse_config_text(
      "# a comment\n\nmethod=apnn   # trailing\n  eps = 0.5 \n");
  CHECK(ok.method == "apnn");
  CHECK(ok.eps == 0.5);
}

TEST_CASE("config hash keys the effective settings") {
  ExperimentConfig a = cli::parse_config_text("eps=1e-3\n");
  ExperimentConfig b = cli::parse_config_text("eps=1e-3\n");
  ExperimentConfig c = cli::parse_config_text("eps=1e-4\n");
  CHECK(cli::config_hash(a) == cli::config_hash(b));
  CHECK(cli::config_hash(a) != cli::config_hash(c));
  CHECK(cli::config_hash(a).size() == 16);
}

TEST_CASE("reference experiment emits deterministic artifacts") {
  namespace fs = std::filesystem;
  ExperimentConfig c = cli::parse_config_text(
      "problem=problem1\nmethod=reference\neps=1e-3\nnv=4\nref_dx=0.02\n");
  cli::ResultsBundle r1 = cli::run_experiment(c, cli::RunMode::kReference);
  CHECK(r1.has_trajectory);
  CHECK(r1.rho_final.size() == 51);

  fs::path dir = fs::temp_directory_path() / "sb_emit_test";
  fs::remove_all(dir);
  auto files = cli::emit_results(r1, dir.string());
  // forward-run manifest is mode dependent; reference carries trajectories
  bool has_rho = false, has_summary = false, has_traj = false;
  for (const auto& f : files) {
    if (f == "rho_final.csv") has_rho = true;
    if (f == "summary.json") has_summary = true;
    if (f == "trajectory_rho.csv") has_traj = true;
  }
  CHECK(has_rho);
  CHECK(has_summary);
  CHECK(has_traj);

  // byte-identical on a repeated identical run
  cli::ResultsBundle r2 = cli::run_experiment(c, cli::RunMode::kReference);
  fs::path dir2 = fs::temp_directory_path() / "sb_emit_test2";
  fs::remove_all(dir2);
  cli::emit_results(r2, dir2.string());
  for (const char* name : {"rho_final.csv", "trajectory_rho.csv"}) {
    std::ifstream f1(dir / name), f2(dir2 / name);
    std::string s1((std::istreambuf_iterator<char>(f1)),
                   std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)),
                   std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
  }

  // summary round-trips through a strict parser
  std::ifstream js(dir / "summary.json");
  nlohmann::json j = nlohmann::json::parse(js);
  CHECK(j["config_hash"] == cli::config_hash(c));
  CHECK(j["problem"] == "problem1");
  CHECK(j["method"] == "reference");
  CHECK(j["eps"] == 1e-3);

  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("tiny forward experiment produces the mode-dependent manifest") {
  namespace fs = std::filesystem;
  ExperimentConfig c = cli::parse_config_text(
      "problem=problem1\nmethod=apnn\neps=1.0\nnv=4\nref_dx=0.02\n"
      "hidden_layers=1\nneurons=6\nepochs=8\npretrain_epochs=4\n"
      "colloc_nt=3\ncolloc_nx=5\nrel_log_interval=4\n");
  cli::ResultsBundle r = cli::run_experiment(c, cli::RunMode::kForward);
  CHECK(r.rel_error_rho >= 0.0);
  CHECK(r.log.rows.size() == 8);

  fs::path dir = fs::temp_directory_path() / "sb_emit_fwd";
  fs::remove_all(dir);
  auto files = cli::emit_results(r, dir.string());
  std::vector<std::string> expect{"rho_final.csv", "loss_history.csv",
                                  "summary.json"};
  CHECK(files == expect);
  fs::remove_all(dir);
}

TEST_CASE("tiny inverse experiment tracks sigma per initial guess") {
  namespace fs = std::filesystem;
  ExperimentConfig c = cli::parse_config_text(
      "problem=problem1\nmethod=bi_implicit\neps=1e-3\nnv=4\nref_dx=0.02\n"
      "hidden_layers=1\nneurons=6\nepochs=6\npretrain_epochs=0\n"
      "colloc_nt=3\ncolloc_nx=5\nn_obs_rho=20\nsigma0_list=0.5,1.9\n");
  cli::ResultsBundle r = cli::run_experiment(c, cli::RunMode::kInverse);
  CHECK(r.sigma_hats.size() == 2);
  CHECK(r.sigma_trajectories.size() == 2);
  CHECK(r.sigma_trajectories[0].size() == 6);
  CHECK(r.sigma_hat ==
        doctest::Approx(0.5 * (r.sigma_hats[0] + r.sigma_hats[1])));

  fs::path dir = fs::temp_directory_path() / "sb_emit_inv";
  fs::remove_all(dir);
  auto files = cli::emit_results(r, dir.string());
  bool has_sigma = false;
  for (const auto& f : files)
    if (f == "sigma_trajectory.csv") has_sigma = true;
  CHECK(has_sigma);
  fs::remove_all(dir);
}
