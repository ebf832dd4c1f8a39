#pragma once

#include <functional>
#include <utility>

#include "semibolt/common.hpp"

// Gauss-Hermite quadrature, renormalized Hermite basis, Maxwellian moments,
// the projection onto the local equilibrium, the scattering operator and the
// diffusion coefficient. All velocity-space fields are carried as the ratio
// f/M sampled at the quadrature nodes, which keeps outer-node values O(1).
//
// Two weight vectors coexist on purpose: weights_gh integrates against
// exp(-v^2) (spectral transforms, the derivative matrix), weights_maxwellian
// absorbs the Maxwellian (moments, collision frequency).

namespace semibolt::spectral {

struct HermiteBasis {
  int order_n = 0;    // truncation order N of the expansion
  int num_nodes = 0;  // N_v quadrature points

  Vec nodes;                // v_j, strictly increasing, antisymmetric
  Vec weights_gh;           // w_j with sum = sqrt(pi)
  Vec weights_maxwellian;   // w_j / sqrt(pi), sum = 1

  // H~_k(v_j), (N+1) x N_v
  RowMatrix basis_values;
  // entry (j,i) = C_j(v_i) = sum_k sqrt(2k) H~_k(v_j) H~_{k-1}(v_i) w_j
  RowMatrix deriv_matrix_C;
  // transpose of the above: (d_v psi)(v_i) = sum_j dv(i,j) psi(v_j)
  RowMatrix dv_apply;

  Vec maxwellian_at_nodes;  // M(v_j)
};

std::pair<Vec, Vec> gauss_hermite_rule(int n);

double hermite_renormalized(int k, double v);

HermiteBasis build_basis(int order_n, int num_nodes);

double maxwellian(double v);

double bracket_moment(std::span<const double> f_over_m,
                      const HermiteBasis& basis);

Vec project_pi(std::span<const double> f_over_m, const HermiteBasis& basis);

using ScatterKernel = std::function<double(double, double)>;

struct CollisionOperator {
  RowMatrix scatter;  // (i,j) = sigma(v_i, v_j) * w_j^M
  Vec lambda;         // lambda(v_i) = sum_j sigma(v_i, v_j) w_j^M
};

CollisionOperator make_collision(const ScatterKernel& sigma,
                                 const HermiteBasis& basis);

// Q(g)/M at nodes for psi = g/M at nodes.
Vec collision_apply(const CollisionOperator& op,
                    std::span<const double> psi);

// Convenience form matching the operator-by-operator contract; second member
// of the result is lambda at the nodes.
std::pair<Vec, Vec> collision_q(std::span<const double> psi,
                                const ScatterKernel& sigma,
                                const HermiteBasis& basis);

// T = sum_j v_j^2 / lambda(v_j) * w_j^M; requires lambda > 0 at every node.
double diffusion_coefficient_t(const CollisionOperator& op,
                               const HermiteBasis& basis);
double diffusion_coefficient_t(const ScatterKernel& sigma,
                               const HermiteBasis& basis);

}  // namespace semibolt::spectral
