#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "semibolt/problems.hpp"
#include "semibolt/reference.hpp"
#include "semibolt/train.hpp"

using namespace semibolt;
using classic::make_grid;
using classic::PoissonProblem;
using classic::PotentialField;
using classic::SpatialGrid;

namespace {

PotentialField zero_potential() {
  PotentialField p;
  p.phi = [](double, double) { return 0.0; };
  p.dphi = [](double, double) { return 0.0; };
  p.d2phi = [](double, double) { return 0.0; };
  return p;
}

double max_abs_residual(const Vec& phi, std::span<const double> rho,
                        const PoissonProblem& prob, const SpatialGrid& g) {
  double worst = 0.0;
  for (int i = 1; i < g.nx - 1; ++i) {
    double lap = (phi[i + 1] - 2 * phi[i] + phi[i - 1]) / (g.dx * g.dx);
    worst = std::max(worst,
                     std::abs(prob.beta * lap - (rho[i] - prob.doping[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("poisson: trivial, manufactured and biased cases") {
  SpatialGrid g = make_grid(0.0, 1.0, 101);

  PoissonProblem p;
  p.beta = 0.002;
  p.bias_v = 3.0;
  p.doping.assign(g.nx, 1.0);
  Vec rho(g.nx, 1.0);
  Vec phi = classic::solve_poisson(rho, p, g);
  for (int i = 0; i < g.nx; ++i)
    CHECK(std::abs(phi[i] - 3.0 * g.nodes[i]) < 1e-12);
  CHECK(max_abs_residual(phi, rho, p, g) < 1e-12);

  // phi'' = 2 with zero boundary data: phi = x(x-1)
  p.bias_v = 0.0;
  for (int i = 0; i < g.nx; ++i) rho[i] = 1.0 + p.beta * 2.0;
  phi = classic::solve_poisson(rho, p, g);
  for (int i = 0; i < g.nx; ++i)
    CHECK(std::abs(phi[i] - g.nodes[i] * (g.nodes[i] - 1.0)) < 1e-10);

  p.bias_v = 5.0;
  rho.assign(g.nx, 1.0);
  phi = classic::solve_poisson(rho, p, g);
  CHECK(phi[g.nx - 1] == 5.0);
  CHECK(phi[0] == 0.0);

  SpatialGrid g2 = make_grid(0.0, 1.0, 2);
  PoissonProblem p2;
  p2.beta = 1.0;
  p2.doping.assign(2, 1.0);
  Vec r2(2, 1.0);
  CHECK_THROWS_AS(classic::solve_poisson(r2, p2, g2), std::invalid_argument);
}

TEST_CASE("poisson: second-order self-convergence on a smooth solution") {
  // manufactured: phi = sin(pi x) + V x with rho - c = beta phi''
  auto err_at = [](int nx) {
    SpatialGrid g = make_grid(0.0, 1.0, nx);
    PoissonProblem p;
    p.beta = 0.37;
    p.bias_v = 2.0;
    p.doping.assign(g.nx, 0.0);
    Vec rho(g.nx);
    const double pi = 3.14159265358979323846;
    for (int i = 0; i < g.nx; ++i)
      rho[i] = -p.beta * pi * pi * std::sin(pi * g.nodes[i]);
    Vec phi = classic::solve_poisson(rho, p, g);
    double worst = 0.0;
    for (int i = 0; i < g.nx; ++i) {
      double exact = std::sin(pi * g.nodes[i]) + 2.0 * g.nodes[i];
      worst = std::max(worst, std::abs(phi[i] - exact));
    }
    return worst;
  };
  double e1 = err_at(51), e2 = err_at(101);
  double rate = std::log2(e1 / e2);
  CHECK(rate > 1.9);
  CHECK(rate < 2.1);
}

TEST_CASE("drift-diffusion: constant state, convergence, mass balance") {
  SpatialGrid g = make_grid(0.0, 1.0, 101);

  {
    auto traj = classic::solve_drift_diffusion(
        0.25, zero_potential(), g, 0.005, 0.1, Vec(g.nx, 1.0), {1.0, 1.0});
    for (const auto& level : traj)
      for (double r : level) CHECK(std::abs(r - 1.0) < 1e-12);
  }

  {
    const double pi = 3.14159265358979323846;
    Vec rho0(g.nx);
    for (int i = 0; i < g.nx; ++i)
      rho0[i] = 1.0 + std::sin(pi * g.nodes[i]);
    auto coarse = classic::solve_drift_diffusion(
        0.25, zero_potential(), g, 0.005, 0.1, rho0, {1.0, 1.0});
    SpatialGrid gf = make_grid(0.0, 1.0, 1001);
    Vec rho0f(gf.nx);
    for (int i = 0; i < gf.nx; ++i)
      rho0f[i] = 1.0 + std::sin(pi * gf.nodes[i]);
    auto fine = classic::solve_drift_diffusion(
        0.25, zero_potential(), gf, 0.0005, 0.1, rho0f, {1.0, 1.0});
    Vec fine_on_coarse(g.nx);
    for (int i = 0; i < g.nx; ++i) fine_on_coarse[i] = fine.back()[i * 10];
    double err = train::relative_l2_error(coarse.back(), fine_on_coarse);
    CHECK(err < 2e-3);
    // it decays toward the boundary value
    for (int i = 0; i < g.nx; ++i)
      CHECK(coarse.back()[i] < rho0[i] + 1e-12);
  }

  {
    // flux-form telescoping: interior mass change equals the boundary-flux
    // difference computed from the updated field
    PotentialField pot;
    pot.phi = [](double, double x) { return 0.3 * std::sin(6.28 * x) + x * x; };
    pot.dphi = [](double, double x) {
      return 0.3 * 6.28 * std::cos(6.28 * x) + 2 * x;
    };
    pot.d2phi = [](double, double x) {
      return -0.3 * 6.28 * 6.28 * std::sin(6.28 * x) + 2.0;
    };
    Vec rho0(g.nx);
    for (int i = 0; i < g.nx; ++i)
      rho0[i] = 1.0 + 0.4 * std::cos(3.0 * g.nodes[i]);
    const double T = 0.25, dt = 0.005;
    auto traj =
        classic::solve_drift_diffusion(T, pot, g, dt, 0.05, rho0, {1.4, 1.0});
    Vec phix(g.nx);
    for (int s = 1; s < static_cast<int>(traj.size()); ++s) {
      for (int i = 0; i < g.nx; ++i)
        phix[i] = pot.dphi(s * dt, g.nodes[i]);
      const Vec& nw = traj[s];
      const Vec& od = traj[s - 1];
      auto flux = [&](int i) {  // at interface i+1/2
        return T * ((nw[i + 1] - nw[i]) / g.dx -
                    (nw[i] * phix[i] + nw[i + 1] * phix[i + 1]));
      };
      double dmass = 0.0;
      for (int i = 1; i < g.nx - 1; ++i) dmass += (nw[i] - od[i]) * g.dx;
      double bflux = dt * (flux(g.nx - 2) - flux(0));
      CHECK(std::abs(dmass - bflux) < 1e-8);
    }
  }
}

TEST_CASE("micro-macro step: equilibrium fixed point and mass constraint") {
  SpatialGrid g = make_grid(0.0, 1.0, 101);
  spectral::HermiteBasis basis = spectral::build_basis(7, 8);
  auto coll =
      spectral::make_collision([](double, double) { return 2.0; }, basis);

  classic::KineticField f;
  f.rho.assign(g.nx, 1.0);
  f.g_over_m = RowMatrix(g.nx, 8);
  Vec phix(g.nx, 0.0);

  classic::KineticField next =
      classic::step_micro_macro_ap(f, 1.0, coll, phix, g, basis, 0.005,
                                   {1.0, 1.0});
  for (int i = 0; i < g.nx; ++i) {
    CHECK(std::abs(next.rho[i] - 1.0) < 1e-12);
    for (int j = 0; j < 8; ++j) CHECK(std::abs(next.g_over_m(i, j)) < 1e-12);
  }

  // random admissible state keeps <g> = 0 exactly after stepping
  problems::Setup p1 = problems::problem1();
  for (int i = 0; i < g.nx; ++i) {
    f.rho[i] = 1.0 + 0.3 * std::sin(5.0 * g.nodes[i]);
    phix[i] = p1.potential.dphi(0.0, g.nodes[i]);
    for (int j = 0; j < 8; ++j)
      f.g_over_m(i, j) = 0.1 * std::sin(3.0 * g.nodes[i] + j);
    double m = 0.0;
    for (int j = 0; j < 8; ++j)
      m += f.g_over_m(i, j) * basis.weights_maxwellian[j];
    for (int j = 0; j < 8; ++j) f.g_over_m(i, j) -= m;
  }
  for (double eps : {1.0, 1e-3, 1e-8}) {
    classic::KineticField out =
        classic::step_micro_macro_ap(f, eps, coll, phix, g, basis, 0.005,
                                     {1.0, 1.0});
    for (int i = 0; i < g.nx; ++i) {
      double m = 0.0;
      for (int j = 0; j < 8; ++j)
        m += out.g_over_m(i, j) * basis.weights_maxwellian[j];
      CHECK(std::abs(m) < 1e-12);
    }
  }

  CHECK_THROWS_AS(classic::step_micro_macro_ap(f, 1.0, coll, phix, g, basis,
                                               -0.1, {1.0, 1.0}),
                  std::invalid_argument);
  auto bad = spectral::make_collision([](double, double) { return 0.0; },
                                      basis);
  CHECK_THROWS_AS(classic::step_micro_macro_ap(f, 1.0, bad, phix, g, basis,
                                               0.005, {1.0, 1.0}),
                  std::domain_error);
}

TEST_CASE("micro-macro scheme reaches the drift-diffusion limit") {
  spectral::HermiteBasis basis = spectral::build_basis(7, 8);
  SpatialGrid g = make_grid(0.0, 1.0, 101);
  problems::Setup p1 = problems::problem1();
  classic::ReferenceProblem rp = problems::reference_problem(p1, g, basis);

  double t_coef = spectral::diffusion_coefficient_t(rp.sigma, basis);
  CHECK(t_coef == doctest::Approx(0.25).epsilon(1e-12));
  auto dd = classic::solve_drift_diffusion(t_coef, p1.potential, g, 0.005,
                                           0.1, Vec(g.nx, 1.0), {1.0, 1.0});

  double prev = 1e9;
  for (double eps : {1e-3, 1e-6, 1e-8}) {
    classic::ReferenceRun run =
        classic::run_reference(rp, eps, g, 0.005, 0.1, basis);
    double err = train::relative_l2_error(run.rho.back(), dd.back());
    CHECK(err <= prev + 1e-14);
    prev = err;
    if (eps == 1e-8) {
      CHECK(err < 1e-3);  // same discretization on both routes
    } else {
      CHECK(err < 1e-2);
    }
  }
}

TEST_CASE("uniform stability and continuity in eps") {
  spectral::HermiteBasis basis = spectral::build_basis(7, 8);
  SpatialGrid g = make_grid(0.0, 1.0, 101);
  problems::Setup p1 = problems::problem1();
  classic::ReferenceProblem rp = problems::reference_problem(p1, g, basis);

  for (double eps : {1.0, 1e-1, 1e-3, 1e-8}) {
    classic::ReferenceRun run =
        classic::run_reference(rp, eps, g, 0.005, 0.1, basis);
    for (double r : run.rho.back()) {
      CHECK(std::isfinite(r));
      CHECK(r > 0.0);
    }
  }

  classic::ReferenceRun a = classic::run_reference(rp, 1.0, g, 0.005, 0.1,
                                                   basis);
  classic::ReferenceRun b =
      classic::run_reference(rp, 1.0000001, g, 0.005, 0.1, basis);
  CHECK(train::relative_l2_error(a.rho.back(), b.rho.back()) < 1e-5);
}

TEST_CASE("poisson-coupled run pins the boundary potential") {
  spectral::HermiteBasis basis = spectral::build_basis(7, 8);
  SpatialGrid g = make_grid(0.0, 1.0, 101);
  problems::Setup p2 = problems::problem2();
  classic::ReferenceProblem rp = problems::reference_problem(p2, g, basis);

  classic::ReferenceRun run =
      classic::run_reference(rp, 1e-8, g, 0.005, 0.1, basis);
  REQUIRE(run.phi.size() == run.times.size());
  for (const auto& phi : run.phi) {
    CHECK(phi[0] == 0.0);
    CHECK(phi[g.nx - 1] == 5.0);
  }
  for (double r : run.rho.back()) CHECK(std::isfinite(r));

  // doping profile hits the stated plateau and channel values
  CHECK(p2.doping(0.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p2.doping(0.5) ==
        doctest::Approx(1.0 - (1.0 - (1.0 - 0.001) / 2.0) * 2.0)
            .epsilon(1e-6));
}

TEST_CASE("problem 1 reference is insensitive to one refinement level") {
  spectral::HermiteBasis basis = spectral::build_basis(7, 8);
  problems::Setup p1 = problems::problem1();

  SpatialGrid g = make_grid(0.0, 1.0, 101);
  classic::ReferenceProblem rp = problems::reference_problem(p1, g, basis);
  classic::ReferenceRun coarse =
      classic::run_reference(rp, 1e-8, g, 0.005, 0.1, basis);

  SpatialGrid gf = make_grid(0.0, 1.0, 201);
  classic::ReferenceProblem rpf = problems::reference_problem(p1, gf, basis);
  classic::ReferenceRun fine =
      classic::run_reference(rpf, 1e-8, gf, 0.0025, 0.1, basis);
  Vec fine_on_coarse(g.nx);
  for (int i = 0; i < g.nx; ++i) fine_on_coarse[i] = fine.rho.back()[2 * i];
  CHECK(train::relative_l2_error(coarse.rho.back(), fine_on_coarse) < 2e-2);
}
