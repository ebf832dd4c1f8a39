#include "semibolt/problems.hpp"

#include <cmath>

namespace semibolt::problems {

namespace {
constexpr double kE = 2.718281828459045235;
}

Setup problem1() {
  Setup s;
  s.problem = Problem::kProblem1;
  // phi(x) = exp(-50 e (1/4 - x)^2), supplied with exact derivatives
  s.potential.phi = [](double, double x) {
    double u = 0.25 - x;
    return std::exp(-50.0 * kE * u * u);
  };
  s.potential.dphi = [](double, double x) {
    double u = 0.25 - x;
    return 100.0 * kE * u * std::exp(-50.0 * kE * u * u);
  };
  s.potential.d2phi = [](double, double x) {
    double u = 0.25 - x;
    double a = 100.0 * kE * u;
    return (a * a - 100.0 * kE) * std::exp(-50.0 * kE * u * u);
  };
  return s;
}

Setup problem2(double beta, double bias_v) {
  Setup s;
  s.problem = Problem::kProblem2;
  s.beta = beta;
  s.bias_v = bias_v;
  // c(x) = 1 - (1 - m) rho(0, t=0) [tanh((x-.3)/.02) - tanh((x-.7)/.02)],
  // m = (1 - 0.001)/2 and rho(0, t=0) = 1 from the Maxwellian initial data
  const double m = (1.0 - 0.001) / 2.0;
  s.doping = [m](double x) {
    return 1.0 - (1.0 - m) * (std::tanh((x - 0.3) / 0.02) -
                              std::tanh((x - 0.7) / 0.02));
  };
  return s;
}

classic::ReferenceProblem reference_problem(const Setup& s,
                                            const classic::SpatialGrid& grid,
                                            const spectral::HermiteBasis&) {
  classic::ReferenceProblem p;
  p.sigma = [sv = s.sigma_true](double, double) { return sv; };
  p.rho0.assign(grid.nx, 1.0);
  p.rho_bc = {1.0, 1.0};
  if (s.problem == Problem::kProblem1) {
    p.poisson_coupled = false;
    p.potential = s.potential;
  } else {
    p.poisson_coupled = true;
    p.poisson.beta = s.beta;
    p.poisson.bias_v = s.bias_v;
    p.poisson.doping.resize(grid.nx);
    for (int i = 0; i < grid.nx; ++i)
      p.poisson.doping[i] = s.doping(grid.nodes[i]);
  }
  return p;
}

}  // namespace semibolt::problems
