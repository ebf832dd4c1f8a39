#include <cmath>
#include <cstring>

#include "semibolt/kernels.hpp"

namespace semibolt::kern {

namespace {

constexpr size_t kBlock = 1024;

void s_copy(size_t n, const double* x, double* y) {
  std::memcpy(y, x, n * sizeof(double));
}

void s_zero(size_t n, double* y) { std::memset(y, 0, n * sizeof(double)); }

void s_axpy(size_t n, double a, const double* x, double* y) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_scale(size_t n, double a, const double* x, double* y) {
  for (size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void s_shift(size_t n, double c, const double* x, double* y) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] + c;
}

void s_add_scaled(size_t n, double c, const double* x, const double* y,
                  double* out) {
  for (size_t i = 0; i < n; ++i) out[i] = x[i] + c * y[i];
}

void s_mul(size_t n, const double* x, const double* y, double* out) {
  for (size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void s_mul_acc(size_t n, const double* x, const double* y, double* out) {
  for (size_t i = 0; i < n; ++i) out[i] += x[i] * y[i];
}

void s_mul_acc_scaled(size_t n, double c, const double* x, const double* y,
                      double* out) {
  for (size_t i = 0; i < n; ++i) out[i] += c * x[i] * y[i];
}

void s_vtanh(size_t n, const double* x, double* y) {
  for (size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void s_vexp_neg(size_t n, const double* x, double* y) {
  for (size_t i = 0; i < n; ++i) y[i] = std::exp(-x[i]);
}

void s_one_minus_sq(size_t n, const double* x, double* y) {
  for (size_t i = 0; i < n; ++i) y[i] = 1.0 - x[i] * x[i];
}

void s_tanh_bwd(size_t n, const double* y, const double* gy, double* gx) {
  for (size_t i = 0; i < n; ++i) gx[i] += (1.0 - y[i] * y[i]) * gy[i];
}

// Fixed-block pairwise combine: partial sums per 1024-block, then a pairwise
// tree over the partials. The tree shape depends only on n.
template <typename BlockFn>
double blocked_reduce(size_t n, BlockFn block) {
  size_t nblocks = (n + kBlock - 1) / kBlock;
  if (nblocks == 0) return 0.0;
  if (nblocks == 1) return block(0, n);
  double stack[64];
  size_t count[64];
  int top = 0;
  for (size_t bi = 0; bi < nblocks; ++bi) {
    size_t lo = bi * kBlock;
    size_t hi = lo + kBlock < n ? lo + kBlock : n;
    stack[top] = block(lo, hi);
    count[top] = 1;
    ++top;
    while (top >= 2 && count[top - 1] == count[top - 2]) {
      stack[top - 2] += stack[top - 1];
      count[top - 2] *= 2;
      --top;
    }
  }
  double r = stack[--top];
  while (top > 0) r += stack[--top];
  return r;
}

double s_dot(size_t n, const double* x, const double* y) {
  return blocked_reduce(n, [&](size_t lo, size_t hi) {
    double s = 0.0;
    for (size_t i = lo; i < hi; ++i) s += x[i] * y[i];
    return s;
  });
}

double s_sum(size_t n, const double* x) {
  return blocked_reduce(n, [&](size_t lo, size_t hi) {
    double s = 0.0;
    for (size_t i = lo; i < hi; ++i) s += x[i];
    return s;
  });
}

double s_sumsq(size_t n, const double* x) {
  return blocked_reduce(n, [&](size_t lo, size_t hi) {
    double s = 0.0;
    for (size_t i = lo; i < hi; ++i) s += x[i] * x[i];
    return s;
  });
}

void s_gemm_acc(int m, int k, size_t b, const double* w, int w_rs, int w_cs,
                const double* x, double* y) {
  for (int i = 0; i < m; ++i) {
    double* yi = y + static_cast<size_t>(i) * b;
    for (int kk = 0; kk < k; ++kk) {
      double wik = w[static_cast<size_t>(i) * w_rs + static_cast<size_t>(kk) * w_cs];
      const double* xk = x + static_cast<size_t>(kk) * b;
      for (size_t j = 0; j < b; ++j) yi[j] += wik * xk[j];
    }
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops t = {
      "scalar",    s_copy,   s_zero,       s_axpy,     s_scale,
      s_shift,     s_add_scaled, s_mul,    s_mul_acc,  s_mul_acc_scaled,
      s_vtanh,     s_vexp_neg,   s_one_minus_sq, s_tanh_bwd,
      s_dot,       s_sum,    s_sumsq,      s_gemm_acc,
  };
  return t;
}

}  // namespace semibolt::kern
