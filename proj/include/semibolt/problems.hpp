#pragma once

#include <functional>

#include "semibolt/reference.hpp"

// The two benchmark configurations: a given-potential transport problem on
// [0,1] and the Poisson-coupled diode with a doping channel. Both start from
// the Maxwellian and use Maxwellian inflow.

namespace semibolt::problems {

enum class Problem { kProblem1, kProblem2 };

struct Setup {
  Problem problem = Problem::kProblem1;
  double sigma_true = 2.0;
  double t_final = 0.1;
  double x_min = 0.0, x_max = 1.0;

  classic::PotentialField potential;  // problem 1 (time-independent)

  double beta = 0.002;   // problem 2
  double bias_v = 5.0;   // problem 2
  std::function<double(double)> doping;  // problem 2
};

Setup problem1();
Setup problem2(double beta = 0.002, double bias_v = 5.0);

// Assemble the classical-solver view of a setup on a given grid.
classic::ReferenceProblem reference_problem(const Setup& s,
                                            const classic::SpatialGrid& grid,
                                            const spectral::HermiteBasis& basis);

}  // namespace semibolt::problems
