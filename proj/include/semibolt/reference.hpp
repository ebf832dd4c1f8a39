#pragma once

#include <functional>
#include <utility>

#include "semibolt/common.hpp"
#include "semibolt/hermite.hpp"

// Classical (non-neural) solvers used as ground truth: the micro-macro
// asymptotic-preserving scheme, the drift-diffusion limit solver and the 1D
// Poisson solver for the self-consistent potential.

namespace semibolt::classic {

struct SpatialGrid {
  double x_min = 0.0, x_max = 1.0;
  int nx = 0;
  double dx = 0.0;
  Vec nodes;
};

SpatialGrid make_grid(double x_min, double x_max, int nx);

// Density plus micro part at one time level. g is stored as g/M on the
// nx x N_v node grid; <g> = 0 holds at every spatial node.
struct KineticField {
  Vec rho;
  RowMatrix g_over_m;
  double time = 0.0;
};

struct PoissonProblem {
  double beta = 0.0;   // scaled Debye length
  double bias_v = 0.0; // applied bias: phi(x_max) = bias_v, phi(x_min) = 0
  Vec doping;          // c(x) on the grid
};

// beta phi'' = rho - c, Dirichlet 0 / bias_v, second-order central
// differences, direct tridiagonal solve.
Vec solve_poisson(std::span<const double> rho, const PoissonProblem& prob,
                  const SpatialGrid& grid);

// Time-dependent potential with analytic x-derivatives where available.
struct PotentialField {
  std::function<double(double, double)> phi;    // (t, x)
  std::function<double(double, double)> dphi;   // d/dx
  std::function<double(double, double)> d2phi;  // d2/dx2
};

// d_t rho = d_x (T (d_x rho - 2 rho d_x phi)), implicit Euler, central
// second-order flux form, Dirichlet boundary values. Returns every time
// level including t = 0.
std::vector<Vec> solve_drift_diffusion(double diff_t, const PotentialField& pot,
                                       const SpatialGrid& grid, double dt,
                                       double t_final, const Vec& rho0,
                                       std::pair<double, double> bc);

// One step of the coupled micro-macro system. The macro update eliminates
// g^{n+1} through interface fluxes, so the tridiagonal system it solves
// degenerates to the implicit drift-diffusion discretization as eps -> 0.
// The micro field is advanced with relaxation, upwind x-transport and the
// electric v-drift all implicit (block-tridiagonal in space); projection
// terms are lagged one step. <g_new> = 0 is enforced by re-projection.
KineticField step_micro_macro_ap(const KineticField& state, double eps,
                                 const spectral::CollisionOperator& coll,
                                 std::span<const double> phi_x,
                                 const SpatialGrid& grid,
                                 const spectral::HermiteBasis& basis, double dt,
                                 std::pair<double, double> rho_bc);

struct ReferenceProblem {
  bool poisson_coupled = false;    // true: solve phi from Poisson each step
  PotentialField potential;        // used when not coupled
  PoissonProblem poisson;          // used when coupled
  spectral::ScatterKernel sigma;
  Vec rho0;
  RowMatrix g0_over_m;             // empty -> zero
  std::pair<double, double> rho_bc{1.0, 1.0};
};

struct ReferenceRun {
  Vec times;
  std::vector<Vec> rho;        // per level
  std::vector<RowMatrix> g;    // per level, g/M
  std::vector<Vec> phi;        // per level (poisson-coupled runs only)
};

ReferenceRun run_reference(const ReferenceProblem& prob, double eps,
                           const SpatialGrid& grid, double dt, double t_final,
                           const spectral::HermiteBasis& basis);

}  // namespace semibolt::classic
