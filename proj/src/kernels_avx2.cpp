// AVX2+FMA kernel variants. Compiled with -mavx2 -mfma; only reached when
// CPUID reports support (see kernels.cpp). tanh/exp use the Cephes rational
// approximations (~1 ulp); the equivalence suite pins them against libm.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "semibolt/kernels.hpp"

namespace semibolt::kern {

namespace {

constexpr size_t kBlock = 1024;

void a_copy(size_t n, const double* x, double* y) {
  std::memcpy(y, x, n * sizeof(double));
}

void a_zero(size_t n, double* y) { std::memset(y, 0, n * sizeof(double)); }

void a_axpy(size_t n, double a, const double* x, double* y) {
  __m256d av = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void a_scale(size_t n, double a, const double* x, double* y) {
  __m256d av = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = a * x[i];
}

void a_shift(size_t n, double c, const double* x, double* y) {
  __m256d cv = _mm256_set1_pd(c);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(cv, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = x[i] + c;
}

void a_add_scaled(size_t n, double c, const double* x, const double* y,
                  double* out) {
  __m256d cv = _mm256_set1_pd(c);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r = _mm256_fmadd_pd(cv, _mm256_loadu_pd(y + i),
                                _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(out + i, r);
  }
  for (; i < n; ++i) out[i] = x[i] + c * y[i];
}

void a_mul(size_t n, const double* x, const double* y, double* out) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void a_mul_acc(size_t n, const double* x, const double* y, double* out) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i),
                                _mm256_loadu_pd(out + i));
    _mm256_storeu_pd(out + i, r);
  }
  for (; i < n; ++i) out[i] += x[i] * y[i];
}

void a_mul_acc_scaled(size_t n, double c, const double* x, const double* y,
                      double* out) {
  __m256d cv = _mm256_set1_pd(c);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d xy = _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    __m256d r = _mm256_fmadd_pd(cv, xy, _mm256_loadu_pd(out + i));
    _mm256_storeu_pd(out + i, r);
  }
  for (; i < n; ++i) out[i] += c * x[i] * y[i];
}

void a_one_minus_sq(size_t n, const double* x, double* y) {
  __m256d one = _mm256_set1_pd(1.0);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d xv = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y + i, _mm256_fnmadd_pd(xv, xv, one));
  }
  for (; i < n; ++i) y[i] = 1.0 - x[i] * x[i];
}

void a_tanh_bwd(size_t n, const double* y, const double* gy, double* gx) {
  __m256d one = _mm256_set1_pd(1.0);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    __m256d s = _mm256_fnmadd_pd(yv, yv, one);
    __m256d r = _mm256_fmadd_pd(s, _mm256_loadu_pd(gy + i),
                                _mm256_loadu_pd(gx + i));
    _mm256_storeu_pd(gx + i, r);
  }
  for (; i < n; ++i) gx[i] += (1.0 - y[i] * y[i]) * gy[i];
}

// ---- vector exp / tanh -----------------------------------------------------

inline __m256d poly2(__m256d x, double c2, double c1, double c0) {
  __m256d r = _mm256_set1_pd(c2);
  r = _mm256_fmadd_pd(r, x, _mm256_set1_pd(c1));
  r = _mm256_fmadd_pd(r, x, _mm256_set1_pd(c0));
  return r;
}

inline __m256d poly3(__m256d x, double c3, double c2, double c1, double c0) {
  __m256d r = _mm256_set1_pd(c3);
  r = _mm256_fmadd_pd(r, x, _mm256_set1_pd(c2));
  r = _mm256_fmadd_pd(r, x, _mm256_set1_pd(c1));
  r = _mm256_fmadd_pd(r, x, _mm256_set1_pd(c0));
  return r;
}

// exp(x) for x in [-708, 708]; inputs are clamped, which is exact for every
// value this library feeds it (network outputs and residuals are O(1..1e3)).
inline __m256d exp_pd(__m256d x) {
  const __m256d hi = _mm256_set1_pd(708.0);
  const __m256d lo = _mm256_set1_pd(-708.0);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  __m256d nf = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                               _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
  x = _mm256_fnmadd_pd(nf, c1, x);
  x = _mm256_fnmadd_pd(nf, c2, x);

  __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_mul_pd(
      x, poly2(xx, 1.26177193074810590878e-4, 3.02994407707441961300e-2,
               9.99999999999999999910e-1));
  __m256d qx = poly3(xx, 3.00198505138664455042e-6, 2.52448340349684104192e-3,
                     2.27265548208155028766e-1, 2.00000000000000000005e0);
  __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

  // scale by 2^n via exponent bits (|n| <= 1022 after the clamp)
  __m128i ni = _mm256_cvtpd_epi32(nf);
  __m256i n64 = _mm256_cvtepi32_epi64(ni);
  __m256i pow2 =
      _mm256_slli_epi64(_mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(e, _mm256_castsi256_pd(pow2));
}

void a_vexp_neg(size_t n, const double* x, double* y) {
  const __m256d neg = _mm256_set1_pd(-0.0);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d xv = _mm256_xor_pd(_mm256_loadu_pd(x + i), neg);
    _mm256_storeu_pd(y + i, exp_pd(xv));
  }
  for (; i < n; ++i) y[i] = std::exp(-x[i]);
}

void a_vtanh(size_t n, const double* x, double* y) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d one = _mm256_set1_pd(1.0);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d xv = _mm256_loadu_pd(x + i);
    __m256d sign = _mm256_and_pd(xv, sign_mask);
    __m256d z = _mm256_andnot_pd(sign_mask, xv);

    // |x| < 0.625: x + x^3 P(x^2)/Q(x^2), Q monic
    __m256d s = _mm256_mul_pd(xv, xv);
    __m256d p = poly2(s, -9.64399179425052238628e-1,
                      -9.92877231001918586564e1, -1.61468768441708447952e3);
    __m256d q = _mm256_add_pd(
        s, _mm256_set1_pd(1.12811678491632931402e2));
    q = _mm256_fmadd_pd(q, s, _mm256_set1_pd(2.23548839060100448583e3));
    q = _mm256_fmadd_pd(q, s, _mm256_set1_pd(4.84406305325125486048e3));
    __m256d small =
        _mm256_fmadd_pd(_mm256_mul_pd(_mm256_mul_pd(s, xv), p),
                        _mm256_div_pd(one, q), xv);

    // |x| >= 0.625: 1 - 2/(exp(2|x|)+1), sign restored
    __m256d e = exp_pd(_mm256_add_pd(z, z));
    __m256d big = _mm256_sub_pd(
        one, _mm256_div_pd(_mm256_set1_pd(2.0), _mm256_add_pd(e, one)));
    big = _mm256_or_pd(big, sign);

    __m256d use_small = _mm256_cmp_pd(z, _mm256_set1_pd(0.625), _CMP_LT_OQ);
    _mm256_storeu_pd(y + i, _mm256_blendv_pd(big, small, use_small));
  }
  for (; i < n; ++i) y[i] = std::tanh(x[i]);
}

// ---- reductions ------------------------------------------------------------

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

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
    size_t hi2 = lo + kBlock < n ? lo + kBlock : n;
    stack[top] = block(lo, hi2);
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

double a_dot(size_t n, const double* x, const double* y) {
  return blocked_reduce(n, [&](size_t lo, size_t hi) {
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    size_t i = lo;
    for (; i + 8 <= hi; i += 8) {
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i),
                             acc0);
      acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                             _mm256_loadu_pd(y + i + 4), acc1);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < hi; ++i) s += x[i] * y[i];
    return s;
  });
}

double a_sum(size_t n, const double* x) {
  return blocked_reduce(n, [&](size_t lo, size_t hi) {
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    size_t i = lo;
    for (; i + 8 <= hi; i += 8) {
      acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
      acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < hi; ++i) s += x[i];
    return s;
  });
}

double a_sumsq(size_t n, const double* x) {
  return blocked_reduce(n, [&](size_t lo, size_t hi) {
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    size_t i = lo;
    for (; i + 8 <= hi; i += 8) {
      __m256d v0 = _mm256_loadu_pd(x + i);
      __m256d v1 = _mm256_loadu_pd(x + i + 4);
      acc0 = _mm256_fmadd_pd(v0, v0, acc0);
      acc1 = _mm256_fmadd_pd(v1, v1, acc1);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < hi; ++i) s += x[i] * x[i];
    return s;
  });
}

// ---- small-matrix GEMM -----------------------------------------------------

void a_gemm_acc(int m, int k, size_t b, const double* w, int w_rs, int w_cs,
                const double* x, double* y) {
  auto wat = [&](int i, int kk) {
    return w[static_cast<size_t>(i) * w_rs + static_cast<size_t>(kk) * w_cs];
  };
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    double* y0 = y + static_cast<size_t>(i) * b;
    double* y1 = y0 + b;
    double* y2 = y1 + b;
    double* y3 = y2 + b;
    size_t j = 0;
    for (; j + 8 <= b; j += 8) {
      __m256d a00 = _mm256_loadu_pd(y0 + j), a01 = _mm256_loadu_pd(y0 + j + 4);
      __m256d a10 = _mm256_loadu_pd(y1 + j), a11 = _mm256_loadu_pd(y1 + j + 4);
      __m256d a20 = _mm256_loadu_pd(y2 + j), a21 = _mm256_loadu_pd(y2 + j + 4);
      __m256d a30 = _mm256_loadu_pd(y3 + j), a31 = _mm256_loadu_pd(y3 + j + 4);
      for (int kk = 0; kk < k; ++kk) {
        const double* xk = x + static_cast<size_t>(kk) * b + j;
        __m256d xv0 = _mm256_loadu_pd(xk);
        __m256d xv1 = _mm256_loadu_pd(xk + 4);
        __m256d wv;
        wv = _mm256_set1_pd(wat(i + 0, kk));
        a00 = _mm256_fmadd_pd(wv, xv0, a00);
        a01 = _mm256_fmadd_pd(wv, xv1, a01);
        wv = _mm256_set1_pd(wat(i + 1, kk));
        a10 = _mm256_fmadd_pd(wv, xv0, a10);
        a11 = _mm256_fmadd_pd(wv, xv1, a11);
        wv = _mm256_set1_pd(wat(i + 2, kk));
        a20 = _mm256_fmadd_pd(wv, xv0, a20);
        a21 = _mm256_fmadd_pd(wv, xv1, a21);
        wv = _mm256_set1_pd(wat(i + 3, kk));
        a30 = _mm256_fmadd_pd(wv, xv0, a30);
        a31 = _mm256_fmadd_pd(wv, xv1, a31);
      }
      _mm256_storeu_pd(y0 + j, a00);
      _mm256_storeu_pd(y0 + j + 4, a01);
      _mm256_storeu_pd(y1 + j, a10);
      _mm256_storeu_pd(y1 + j + 4, a11);
      _mm256_storeu_pd(y2 + j, a20);
      _mm256_storeu_pd(y2 + j + 4, a21);
      _mm256_storeu_pd(y3 + j, a30);
      _mm256_storeu_pd(y3 + j + 4, a31);
    }
    for (; j < b; ++j) {
      double s0 = y0[j], s1 = y1[j], s2 = y2[j], s3 = y3[j];
      for (int kk = 0; kk < k; ++kk) {
        double xv = x[static_cast<size_t>(kk) * b + j];
        s0 += wat(i + 0, kk) * xv;
        s1 += wat(i + 1, kk) * xv;
        s2 += wat(i + 2, kk) * xv;
        s3 += wat(i + 3, kk) * xv;
      }
      y0[j] = s0;
      y1[j] = s1;
      y2[j] = s2;
      y3[j] = s3;
    }
  }
  for (; i < m; ++i) {
    double* yi = y + static_cast<size_t>(i) * b;
    for (int kk = 0; kk < k; ++kk) {
      double wik = wat(i, kk);
      const double* xk = x + static_cast<size_t>(kk) * b;
      a_axpy(b, wik, xk, yi);
    }
  }
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops t = {
      "avx2",      a_copy,   a_zero,       a_axpy,     a_scale,
      a_shift,     a_add_scaled, a_mul,    a_mul_acc,  a_mul_acc_scaled,
      a_vtanh,     a_vexp_neg,   a_one_minus_sq, a_tanh_bwd,
      a_dot,       a_sum,    a_sumsq,      a_gemm_acc,
  };
  return t;
}

}  // namespace semibolt::kern

#endif  // x86_64
