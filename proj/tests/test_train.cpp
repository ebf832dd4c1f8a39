#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "semibolt/train.hpp"

using namespace semibolt;
using train::AdamState;
using train::LrSchedule;
using train::TrainSpec;

namespace {

struct MiniWorld {
  spectral::HermiteBasis basis = spectral::build_basis(3, 4);
  classic::SpatialGrid grid = classic::make_grid(0.0, 1.0, 51);
  problems::Setup setup = problems::problem1();
  classic::ReferenceRun ref;

  MiniWorld() {
    classic::ReferenceProblem rp =
        problems::reference_problem(setup, grid, basis);
    ref = classic::run_reference(rp, 1e-3, grid, 0.01, 0.1, basis);
  }

  TrainSpec spec(nn::Method m, long epochs) const {
    TrainSpec s;
    s.method = m;
    s.eps = 1e-3;
    s.rho = {1, 8};
    s.diff = {1, 8};
    s.corr = {1, 8};
    s.g = {1, 8};
    s.epochs = epochs;
    s.pretrain_epochs = 40;
    s.schedule.base_lr = 1e-3;
    s.pretrain_schedule.base_lr = 1e-3;
    s.seed = 3;
    s.rel_log_interval = 10;
    s.colloc_nt = 4;
    s.colloc_nx = 9;
    return s;
  }
};

}  // namespace

TEST_CASE("adam: first-step direction, zero gradient, determinism") {
  {
    AdamState st;
    Vec p{1.0, -2.0, 0.5};
    Vec g{0.3, -4.0, 1e-3};
    train::adam_step(st, p, g, 0.01);
    // bias-corrected first step is -lr * sign(g) up to eps_adam slack
    CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-4));
    CHECK(p[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-3));
    CHECK(st.step_count == 1);
  }
  {
    AdamState st;
    Vec p{1.0, 2.0};
    Vec g{0.5, -0.5};
    train::adam_step(st, p, g, 0.01);
    Vec m_before = st.m;
    Vec zero{0.0, 0.0};
    train::adam_step(st, p, zero, 0.01);
    CHECK(std::abs(st.m[0]) < std::abs(m_before[0]));
    CHECK(std::abs(st.m[1]) < std::abs(m_before[1]));
  }
  {
    AdamState s1, s2;
    Vec p1{0.2, -0.7}, p2{0.2, -0.7};
    for (int i = 0; i < 25; ++i) {
      Vec g{0.1 * (i % 3) - 0.05, 0.2};
      train::adam_step(s1, p1, g, 1e-2);
      train::adam_step(s2, p2, g, 1e-2);
    }
    CHECK(p1 == p2);
  }
  {
    AdamState st;
    Vec p{1.0};
    Vec g{std::nan("")};
    CHECK_THROWS_AS(train::adam_step(st, p, g, 0.1), numerical_error);
  }
}

TEST_CASE("zero gradient leaves parameters fixed from a cold start") {
  AdamState st;
  Vec p{1.0, -3.0};
  Vec g{0.0, 0.0};
  train::adam_step(st, p, g, 0.1);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -3.0);
}

TEST_CASE("learning-rate schedules") {
  LrSchedule c;
  c.kind = LrSchedule::Kind::kConstant;
  c.base_lr = 1e-4;
  for (long e : {0L, 1L, 1000L, 19999L}) CHECK(train::lr_at(c, e) == 1e-4);

  LrSchedule s;
  s.kind = LrSchedule::Kind::kStepDecay;
  s.base_lr = 1e-4;
  s.decay_factor = 0.8;
  s.decay_interval = 1000;
  s.floor = 1e-6;
  CHECK(train::lr_at(s, 0) == 1e-4);
  CHECK(train::lr_at(s, 999) == 1e-4);
  CHECK(train::lr_at(s, 1000) == doctest::Approx(8e-5).epsilon(1e-12));
  CHECK(train::lr_at(s, 500000) == 1e-6);
  for (long e = 0; e < 40000; e += 777) CHECK(train::lr_at(s, e) >= 1e-6);
  CHECK_THROWS_AS(train::lr_at(s, -1), std::invalid_argument);
}

TEST_CASE("relative l2 error") {
  Vec ref{1.0, 2.0, -1.0};
  CHECK(train::relative_l2_error(ref, ref) == 0.0);
  Vec twice{2.0, 4.0, -2.0};
  CHECK(train::relative_l2_error(twice, ref) == doctest::Approx(1.0));
  double norm = std::sqrt(6.0);
  Vec pert{1.0 + norm, 2.0, -1.0};
  CHECK(train::relative_l2_error(pert, ref) == doctest::Approx(1.0));
  Vec zero{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(train::relative_l2_error(ref, zero), std::invalid_argument);
  Vec bad{1.0};
  CHECK_THROWS_AS(train::relative_l2_error(bad, ref), std::invalid_argument);
}

TEST_CASE("zero-epoch budget returns the initialized bundle and empty log") {
  MiniWorld w;
  TrainSpec s = w.spec(nn::Method::kApnn, 0);
  auto r = train::train_forward(s, w.setup, w.ref, w.grid, w.basis);
  CHECK(r.log.rows.empty());
  auto fresh = train::make_bundle(s, false);
  CHECK(r.bundle.rho_apnn->theta == fresh.rho_apnn->theta);
  CHECK(r.bundle.g->theta == fresh.g->theta);
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  MiniWorld w;
  TrainSpec s = w.spec(nn::Method::kApnn, 30);
  auto r1 = train::train_forward(s, w.setup, w.ref, w.grid, w.basis);
  auto r2 = train::train_forward(s, w.setup, w.ref, w.grid, w.basis);
  REQUIRE(r1.log.rows.size() == r2.log.rows.size());
  for (size_t i = 0; i < r1.log.rows.size(); ++i)
    CHECK(r1.log.rows[i].lb.total == r2.log.rows[i].lb.total);
  CHECK(r1.bundle.rho_apnn->theta == r2.bundle.rho_apnn->theta);

  TrainSpec s3 = s;
  s3.seed = 4;
  auto r3 = train::train_forward(s3, w.setup, w.ref, w.grid, w.basis);
  CHECK(r1.log.rows.back().lb.total != r3.log.rows.back().lb.total);
}

TEST_CASE("low-fidelity stage freezes bit-exactly before the correction") {
  MiniWorld w;
  TrainSpec s = w.spec(nn::Method::kBiImplicit, 25);
  auto r = train::train_forward(s, w.setup, w.ref, w.grid, w.basis);
  CHECK(r.pretrain_log.rows.size() == 40);
  CHECK(r.log.rows.size() == 25);
  CHECK(r.bundle.rho_diff_frozen);

  // replay the pretraining alone: the frozen parameters must be identical
  TrainSpec s0 = s;
  s0.epochs = 0;
  auto r0 = train::train_forward(s0, w.setup, w.ref, w.grid, w.basis);
  CHECK(r.bundle.rho_diff->theta == r0.bundle.rho_diff->theta);
  // while the trained nets moved
  CHECK(r.bundle.rho_corr->theta != r0.bundle.rho_corr->theta);
}

TEST_CASE("training loss decreases on a short run") {
  MiniWorld w;
  TrainSpec s = w.spec(nn::Method::kBiImplicit, 120);
  auto r = train::train_forward(s, w.setup, w.ref, w.grid, w.basis);
  double first = r.log.rows.front().lb.total;
  double last = r.log.rows.back().lb.total;
  CHECK(last < first);
  CHECK(std::isfinite(r.rel_error_rho));
}

TEST_CASE("divergence guard aborts with a diagnostic") {
  MiniWorld w;
  TrainSpec s = w.spec(nn::Method::kApnn, 10);
  s.divergence_guard = 1e-14;  // any nonzero loss trips it
  CHECK_THROWS_AS(train::train_forward(s, w.setup, w.ref, w.grid, w.basis),
                  divergence_error);
}

TEST_CASE("inverse run recovers sigma on an easy configuration") {
  // smoke-level check: a few hundred epochs move sigma toward the truth
  MiniWorld w;
  TrainSpec s = w.spec(nn::Method::kBiImplicit, 400);
  s.schedule.kind = LrSchedule::Kind::kStepDecay;
  s.schedule.base_lr = 2e-2;
  s.schedule.decay_interval = 100;
  s.schedule.floor = 1e-4;
  loss::ObservationSet obs =
      loss::make_observations(w.ref, w.grid, 60, 0, 42);
  auto r = train::train_inverse(s, w.setup, obs, 1.0, &w.ref, w.grid,
                                w.basis);
  CHECK(r.log.rows.size() == 400);
  CHECK(r.log.rows.front().sigma == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::abs(r.sigma_hat - 2.0) < std::abs(1.0 - 2.0));
}
