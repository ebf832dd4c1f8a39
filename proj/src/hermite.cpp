#include "semibolt/hermite.hpp"

#include <algorithm>
#include <cmath>

namespace semibolt::spectral {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;
constexpr double kInvPiQuarter = 0.75112554446494248286;  // pi^(-1/4)

// Eigenvalues of a symmetric tridiagonal matrix by the implicit QL method
// (EISPACK tql1). d = diagonal, e = subdiagonal (e[0..n-2]).
void tql_eigenvalues(Vec& d, Vec& e) {
  const int n = static_cast<int>(d.size());
  if (n == 1) return;
  e.push_back(0.0);
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= 1e-300 + 2.3e-16 * dd) break;
      }
      if (m != l) {
        if (iter++ == 60)
          throw numerical_error("tql_eigenvalues failed to converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        for (int i = m - 1; i >= l; --i) {
          double f = s * e[i];
          double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
        }
        if (r == 0.0 && m - 1 >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
  e.pop_back();
  std::sort(d.begin(), d.end());
}

}  // namespace

double hermite_renormalized(int k, double v) {
  require(k >= -1, "hermite_renormalized: k must be >= -1");
  if (k == -1) return 0.0;
  double hm1 = 0.0;
  double h = kInvPiQuarter;
  for (int j = 0; j < k; ++j) {
    double hp1 =
        v * std::sqrt(2.0 / (j + 1)) * h - std::sqrt(double(j) / (j + 1)) * hm1;
    hm1 = h;
    h = hp1;
  }
  return h;
}

std::pair<Vec, Vec> gauss_hermite_rule(int n) {
  require(n >= 1, "gauss_hermite_rule: n must be >= 1");

  // Golub-Welsch: Jacobi matrix for physicists' Hermite has zero diagonal and
  // off-diagonal sqrt(k/2).
  Vec d(n, 0.0), e(n > 1 ? n - 1 : 0);
  for (int k = 1; k < n; ++k) e[k - 1] = std::sqrt(k / 2.0);
  tql_eigenvalues(d, e);

  // Newton polish on H~_n, then pair-symmetrize so odd moments vanish exactly.
  for (int j = 0; j < n; ++j) {
    double x = d[j];
    for (int it = 0; it < 3; ++it) {
      double hn = hermite_renormalized(n, x);
      double dh = std::sqrt(2.0 * n) * hermite_renormalized(n - 1, x);
      if (dh != 0.0) x -= hn / dh;
    }
    d[j] = x;
  }
  std::sort(d.begin(), d.end());
  for (int j = 0; j < n / 2; ++j) {
    double m = 0.5 * (d[n - 1 - j] - d[j]);
    d[j] = -m;
    d[n - 1 - j] = m;
  }
  if (n % 2 == 1) d[n / 2] = 0.0;

  Vec w(n);
  for (int j = 0; j < n; ++j) {
    double h = hermite_renormalized(n - 1, d[j]);
    w[j] = 1.0 / (n * h * h);
  }
  // force exact weight symmetry
  for (int j = 0; j < n / 2; ++j) {
    double m = 0.5 * (w[j] + w[n - 1 - j]);
    w[j] = w[n - 1 - j] = m;
  }
  return {d, w};
}

HermiteBasis build_basis(int order_n, int num_nodes) {
  require(order_n >= 0, "build_basis: N must be >= 0");
  require(num_nodes >= 1, "build_basis: N_v must be >= 1");
  require(order_n <= num_nodes - 1,
          "build_basis: N > N_v - 1 aliases the quadrature");

  HermiteBasis b;
  b.order_n = order_n;
  b.num_nodes = num_nodes;
  auto [nodes, wgh] = gauss_hermite_rule(num_nodes);
  b.nodes = std::move(nodes);
  b.weights_gh = std::move(wgh);
  b.weights_maxwellian.resize(num_nodes);
  for (int j = 0; j < num_nodes; ++j)
    b.weights_maxwellian[j] = b.weights_gh[j] / kSqrtPi;

  b.basis_values = RowMatrix(order_n + 1, num_nodes);
  for (int j = 0; j < num_nodes; ++j) {
    double v = b.nodes[j];
    double hm1 = 0.0, h = kInvPiQuarter;
    for (int k = 0; k <= order_n; ++k) {
      b.basis_values(k, j) = h;
      double hp1 = v * std::sqrt(2.0 / (k + 1)) * h -
                   std::sqrt(double(k) / (k + 1)) * hm1;
      hm1 = h;
      h = hp1;
    }
  }

  b.deriv_matrix_C = RowMatrix(num_nodes, num_nodes);
  for (int j = 0; j < num_nodes; ++j)
    for (int i = 0; i < num_nodes; ++i) {
      double s = 0.0;
      for (int k = 1; k <= order_n; ++k)
        s += std::sqrt(2.0 * k) * b.basis_values(k, j) *
             b.basis_values(k - 1, i) * b.weights_gh[j];
      b.deriv_matrix_C(j, i) = s;
    }

  b.dv_apply = RowMatrix(num_nodes, num_nodes);
  for (int i = 0; i < num_nodes; ++i)
    for (int j = 0; j < num_nodes; ++j)
      b.dv_apply(i, j) = b.deriv_matrix_C(j, i);

  b.maxwellian_at_nodes.resize(num_nodes);
  for (int j = 0; j < num_nodes; ++j)
    b.maxwellian_at_nodes[j] = maxwellian(b.nodes[j]);
  return b;
}

double maxwellian(double v) { return std::exp(-v * v) / kSqrtPi; }

double bracket_moment(std::span<const double> f_over_m,
                      const HermiteBasis& basis) {
  require(static_cast<int>(f_over_m.size()) == basis.num_nodes,
          "bracket_moment: length mismatch with basis");
  double s = 0.0;
  for (int j = 0; j < basis.num_nodes; ++j)
    s += f_over_m[j] * basis.weights_maxwellian[j];
  return s;
}

Vec project_pi(std::span<const double> f_over_m, const HermiteBasis& basis) {
  require(static_cast<int>(f_over_m.size()) == basis.num_nodes,
          "project_pi: length mismatch with basis");
  // moment anchored at the first entry: identical analytically (weights sum
  // to one) and exactly the identity on constant vectors, so the projection
  // is idempotent to the bit
  double c0 = f_over_m[0];
  double m = c0;
  for (int j = 0; j < basis.num_nodes; ++j)
    m += (f_over_m[j] - c0) * basis.weights_maxwellian[j];
  return Vec(basis.num_nodes, m);
}

CollisionOperator make_collision(const ScatterKernel& sigma,
                                 const HermiteBasis& basis) {
  const int nv = basis.num_nodes;
  CollisionOperator op;
  op.scatter = RowMatrix(nv, nv);
  op.lambda.assign(nv, 0.0);
  for (int i = 0; i < nv; ++i) {
    for (int j = 0; j < nv; ++j) {
      double s = sigma(basis.nodes[i], basis.nodes[j]) *
                 basis.weights_maxwellian[j];
      op.scatter(i, j) = s;
      op.lambda[i] += s;
    }
  }
  return op;
}

Vec collision_apply(const CollisionOperator& op,
                    std::span<const double> psi) {
  const int nv = op.scatter.rows;
  require(static_cast<int>(psi.size()) == nv,
          "collision_apply: psi length mismatch");
  Vec q(nv, 0.0);
  for (int i = 0; i < nv; ++i) {
    double s = 0.0;
    for (int j = 0; j < nv; ++j) s += op.scatter(i, j) * psi[j];
    q[i] = s - op.lambda[i] * psi[i];
  }
  return q;
}

std::pair<Vec, Vec> collision_q(std::span<const double> psi,
                                const ScatterKernel& sigma,
                                const HermiteBasis& basis) {
  CollisionOperator op = make_collision(sigma, basis);
  return {collision_apply(op, psi), op.lambda};
}

double diffusion_coefficient_t(const CollisionOperator& op,
                               const HermiteBasis& basis) {
  double t = 0.0;
  for (int j = 0; j < basis.num_nodes; ++j) {
    if (!(op.lambda[j] > 0.0))
      throw std::domain_error(
          "diffusion_coefficient_t: collision frequency must be positive");
    double v = basis.nodes[j];
    t += v * v / op.lambda[j] * basis.weights_maxwellian[j];
  }
  return t;
}

double diffusion_coefficient_t(const ScatterKernel& sigma,
                               const HermiteBasis& basis) {
  return diffusion_coefficient_t(make_collision(sigma, basis), basis);
}

}  // namespace semibolt::spectral
