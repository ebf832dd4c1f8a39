#pragma once

#include <cstddef>

// Batched arithmetic primitives behind everything that iterates over
// collocation points. Two implementations exist: a scalar reference and an
// AVX2+FMA variant; the active one is picked once at startup from CPUID and
// can be overridden with force_backend() (used by the equivalence tests).
//
// Reductions (dot/sum/sumsq) use a fixed 1024-element block tree, so their
// result does not depend on how callers split work.

namespace semibolt::kern {

struct Ops {
  const char* name;

  void (*copy)(size_t n, const double* x, double* y);
  void (*zero)(size_t n, double* y);
  // y += a*x
  void (*axpy)(size_t n, double a, const double* x, double* y);
  // y = a*x
  void (*scale)(size_t n, double a, const double* x, double* y);
  // y = x + c
  void (*shift)(size_t n, double c, const double* x, double* y);
  // out = x + c*y
  void (*add_scaled)(size_t n, double c, const double* x, const double* y,
                     double* out);
  // out = x*y
  void (*mul)(size_t n, const double* x, const double* y, double* out);
  // out += x*y
  void (*mul_acc)(size_t n, const double* x, const double* y, double* out);
  // out += c*x*y
  void (*mul_acc_scaled)(size_t n, double c, const double* x, const double* y,
                         double* out);
  void (*vtanh)(size_t n, const double* x, double* y);
  // y = exp(-x)
  void (*vexp_neg)(size_t n, const double* x, double* y);
  // y = 1 - x*x
  void (*one_minus_sq)(size_t n, const double* x, double* y);
  // gx += (1 - y*y)*gy   (y = tanh(a) already computed)
  void (*tanh_bwd)(size_t n, const double* y, const double* gy, double* gx);

  double (*dot)(size_t n, const double* x, const double* y);
  double (*sum)(size_t n, const double* x);
  double (*sumsq)(size_t n, const double* x);

  // Y (m x b) += W (m x k, strided) * X (k x b, rows contiguous).
  // W element (i,k) is read at w[i*w_rs + k*w_cs]; passing (k,1) walks a
  // row-major matrix, (1,m) walks its transpose.
  void (*gemm_acc)(int m, int k, size_t b, const double* w, int w_rs, int w_cs,
                   const double* x, double* y);
};

const Ops& ops();

// "scalar" or "avx2"; throws std::invalid_argument on unknown/unavailable.
void force_backend(const char* name);
bool avx2_available();

}  // namespace semibolt::kern
