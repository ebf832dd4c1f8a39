#include "semibolt/tape.hpp"

#include <cmath>
#include <cstring>

#include "semibolt/kernels.hpp"

namespace semibolt::ad {

namespace {
const kern::Ops& K() { return kern::ops(); }
}

int Tape::push(Node n) {
  require(!finalized_, "tape: cannot add nodes after finalize");
  nodes_.push_back(n);
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::store_aux(std::span<const double> v) {
  aux_.emplace_back(v.begin(), v.end());
  return static_cast<int>(aux_.size()) - 1;
}

int Tape::constant(const double* data, int rows, int cols) {
  Node n{Op::kConst, rows, cols};
  n.aux = store_aux({data, static_cast<size_t>(rows) * cols});
  return push(n);
}

int Tape::constant_fill(double v, int rows, int cols) {
  Vec buf(static_cast<size_t>(rows) * cols, v);
  Node n{Op::kConst, rows, cols};
  n.aux = store_aux(buf);
  return push(n);
}

int Tape::param(const double* data, int rows, int cols) {
  Node n{Op::kParam, rows, cols};
  n.ext = data;
  return push(n);
}

int Tape::matmul(int w, int x) {
  const Node& wn = nodes_[w];
  const Node& xn = nodes_[x];
  require(wn.cols == xn.rows, "matmul: inner dimension mismatch");
  Node n{Op::kMatMul, wn.rows, xn.cols};
  n.a = w;
  n.b = x;
  return push(n);
}

int Tape::add_bias(int x, int bias) {
  const Node& xn = nodes_[x];
  const Node& bn = nodes_[bias];
  require(bn.rows == xn.rows && bn.cols == 1, "add_bias: bias shape");
  Node n{Op::kAddBias, xn.rows, xn.cols};
  n.a = x;
  n.b = bias;
  return push(n);
}

#define UNARY(NAME, OPK)                          \
  int Tape::NAME(int x) {                         \
    Node n{Op::OPK, nodes_[x].rows, nodes_[x].cols}; \
    n.a = x;                                      \
    return push(n);                               \
  }
UNARY(tanh_of, kTanh)
UNARY(exp_neg, kExpNeg)
UNARY(softplus, kSoftplus)
UNARY(one_minus_sq, kOneMinusSq)
UNARY(recip, kRecip)
#undef UNARY

int Tape::mul(int x, int y) {
  require(nodes_[x].rows == nodes_[y].rows && nodes_[x].cols == nodes_[y].cols,
          "mul: shape mismatch");
  Node n{Op::kMul, nodes_[x].rows, nodes_[x].cols};
  n.a = x;
  n.b = y;
  return push(n);
}

int Tape::add_scaled(int x, int y, double c) {
  require(nodes_[x].rows == nodes_[y].rows && nodes_[x].cols == nodes_[y].cols,
          "add_scaled: shape mismatch");
  Node n{Op::kAddScaled, nodes_[x].rows, nodes_[x].cols};
  n.a = x;
  n.b = y;
  n.c0 = c;
  return push(n);
}

int Tape::scale(int x, double c) {
  Node n{Op::kScale, nodes_[x].rows, nodes_[x].cols};
  n.a = x;
  n.c0 = c;
  return push(n);
}

int Tape::row_scale(int x, std::span<const double> w) {
  require(static_cast<int>(w.size()) == nodes_[x].rows, "row_scale: weights");
  Node n{Op::kRowScale, nodes_[x].rows, nodes_[x].cols};
  n.a = x;
  n.aux = store_aux(w);
  return push(n);
}

int Tape::col_sum_w(int x, std::span<const double> w) {
  require(static_cast<int>(w.size()) == nodes_[x].rows, "col_sum_w: weights");
  Node n{Op::kColSumW, 1, nodes_[x].cols};
  n.a = x;
  n.aux = store_aux(w);
  return push(n);
}

int Tape::broadcast_row(int x, int rows) {
  require(nodes_[x].rows == 1, "broadcast_row: input must be 1 x B");
  Node n{Op::kBroadcastRow, rows, nodes_[x].cols};
  n.a = x;
  return push(n);
}

int Tape::scalar_mul(int x, int s) {
  require(nodes_[s].rows == 1 && nodes_[s].cols == 1,
          "scalar_mul: scalar operand must be 1 x 1");
  Node n{Op::kScalarMul, nodes_[x].rows, nodes_[x].cols};
  n.a = x;
  n.b = s;
  return push(n);
}

int Tape::mean_sq_rw(int x, std::span<const double> roww, double norm) {
  require(norm > 0.0, "mean_sq_rw: norm must be positive");
  require(roww.empty() || static_cast<int>(roww.size()) == nodes_[x].rows,
          "mean_sq_rw: row weights");
  Node n{Op::kMeanSqRW, 1, 1};
  n.a = x;
  n.c0 = norm;
  n.aux = roww.empty() ? -1 : store_aux(roww);
  return push(n);
}

int Tape::reshape(int x, int rows, int cols) {
  require(static_cast<size_t>(rows) * cols == elems(x),
          "reshape: element count mismatch");
  Node n{Op::kReshape, rows, cols};
  n.a = x;
  return push(n);
}

void Tape::finalize(bool need_grad) {
  require(!finalized_, "tape: finalize called twice");
  size_t total = 0;
  for (auto& n : nodes_) {
    n.off = total;
    total += static_cast<size_t>(n.rows) * n.cols;
  }
  arena_.assign(total, 0.0);
  need_grad_ = need_grad;
  if (need_grad) {
    for (auto& n : nodes_) n.goff = n.off;
    garena_.assign(total, 0.0);
  }
  // constants never change: copy them once
  for (auto& n : nodes_)
    if (n.op == Op::kConst)
      std::memcpy(arena_.data() + n.off, aux_[n.aux].data(),
                  static_cast<size_t>(n.rows) * n.cols * sizeof(double));
  finalized_ = true;
}

std::span<const double> Tape::value(int id) const {
  const Node& n = nodes_[id];
  return {arena_.data() + n.off, static_cast<size_t>(n.rows) * n.cols};
}

std::span<const double> Tape::grad(int id) const {
  const Node& n = nodes_[id];
  return {garena_.data() + n.goff, static_cast<size_t>(n.rows) * n.cols};
}

void Tape::forward() {
  require(finalized_, "tape: forward before finalize");
  const auto& k = K();
  double* A = arena_.data();
  for (size_t idx = 0; idx < nodes_.size(); ++idx) {
    Node& n = nodes_[idx];
    const size_t ne = static_cast<size_t>(n.rows) * n.cols;
    double* out = A + n.off;
    const double* av = n.a >= 0 ? A + nodes_[n.a].off : nullptr;
    const double* bv = n.b >= 0 ? A + nodes_[n.b].off : nullptr;
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam:
        std::memcpy(out, n.ext, ne * sizeof(double));
        break;
      case Op::kMatMul: {
        const Node& wn = nodes_[n.a];
        k.zero(ne, out);
        k.gemm_acc(wn.rows, wn.cols, n.cols, av, wn.cols, 1, bv, out);
        break;
      }
      case Op::kAddBias:
        for (int i = 0; i < n.rows; ++i)
          k.shift(n.cols, bv[i], av + static_cast<size_t>(i) * n.cols,
                  out + static_cast<size_t>(i) * n.cols);
        break;
      case Op::kTanh:
        k.vtanh(ne, av, out);
        break;
      case Op::kExpNeg:
        k.vexp_neg(ne, av, out);
        break;
      case Op::kSoftplus:
        for (size_t i = 0; i < ne; ++i)
          out[i] = av[i] > 36.0 ? av[i] : std::log1p(std::exp(av[i]));
        break;
      case Op::kOneMinusSq:
        k.one_minus_sq(ne, av, out);
        break;
      case Op::kMul:
        k.mul(ne, av, bv, out);
        break;
      case Op::kAddScaled:
        k.add_scaled(ne, n.c0, av, bv, out);
        break;
      case Op::kScale:
        k.scale(ne, n.c0, av, out);
        break;
      case Op::kRowScale: {
        const Vec& w = aux_[n.aux];
        for (int i = 0; i < n.rows; ++i)
          k.scale(n.cols, w[i], av + static_cast<size_t>(i) * n.cols,
                  out + static_cast<size_t>(i) * n.cols);
        break;
      }
      case Op::kColSumW: {
        const Vec& w = aux_[n.aux];
        const Node& an = nodes_[n.a];
        k.zero(ne, out);
        for (int i = 0; i < an.rows; ++i)
          k.axpy(n.cols, w[i], av + static_cast<size_t>(i) * n.cols, out);
        break;
      }
      case Op::kBroadcastRow:
        for (int i = 0; i < n.rows; ++i)
          k.copy(n.cols, av, out + static_cast<size_t>(i) * n.cols);
        break;
      case Op::kScalarMul:
        k.scale(ne, bv[0], av, out);
        break;
      case Op::kRecip:
        for (size_t i = 0; i < ne; ++i) out[i] = 1.0 / av[i];
        break;
      case Op::kMeanSqRW: {
        const Node& an = nodes_[n.a];
        double acc = 0.0;
        if (n.aux < 0) {
          acc = k.sumsq(static_cast<size_t>(an.rows) * an.cols, av);
        } else {
          const Vec& w = aux_[n.aux];
          for (int i = 0; i < an.rows; ++i)
            acc += w[i] * k.sumsq(an.cols, av + static_cast<size_t>(i) * an.cols);
        }
        out[0] = acc / n.c0;
        break;
      }
      case Op::kReshape:
        std::memcpy(out, av, ne * sizeof(double));
        break;
    }
  }
}

void Tape::backward(int seed) {
  require(finalized_ && need_grad_, "tape: backward requires grad arena");
  require(nodes_[seed].rows == 1 && nodes_[seed].cols == 1,
          "tape: backward seed must be scalar");
  const auto& k = K();
  k.zero(garena_.size(), garena_.data());
  garena_[nodes_[seed].goff] = 1.0;

  double* A = arena_.data();
  double* G = garena_.data();
  for (int idx = static_cast<int>(nodes_.size()) - 1; idx >= 0; --idx) {
    Node& n = nodes_[idx];
    const size_t ne = static_cast<size_t>(n.rows) * n.cols;
    const double* g = G + n.goff;
    const double* val = A + n.off;
    double* ga = n.a >= 0 ? G + nodes_[n.a].goff : nullptr;
    double* gb = n.b >= 0 ? G + nodes_[n.b].goff : nullptr;
    const double* av = n.a >= 0 ? A + nodes_[n.a].off : nullptr;
    const double* bv = n.b >= 0 ? A + nodes_[n.b].off : nullptr;
    switch (n.op) {
      case Op::kConst:
      case Op::kParam:
        break;
      case Op::kMatMul: {
        const Node& wn = nodes_[n.a];
        if (nodes_[n.a].op == Op::kParam) {
          // gW(i,kk) += <g_row_i, x_row_kk>
          for (int i = 0; i < wn.rows; ++i)
            for (int kk = 0; kk < wn.cols; ++kk)
              ga[static_cast<size_t>(i) * wn.cols + kk] +=
                  k.dot(n.cols, g + static_cast<size_t>(i) * n.cols,
                        bv + static_cast<size_t>(kk) * n.cols);
        }
        // gX += W^T gY
        k.gemm_acc(wn.cols, wn.rows, n.cols, av, 1, wn.cols, g, gb);
        break;
      }
      case Op::kAddBias:
        k.axpy(ne, 1.0, g, ga);
        for (int i = 0; i < n.rows; ++i)
          gb[i] += k.sum(n.cols, g + static_cast<size_t>(i) * n.cols);
        break;
      case Op::kTanh:
        k.tanh_bwd(ne, val, g, ga);
        break;
      case Op::kExpNeg:
        k.mul_acc_scaled(ne, -1.0, val, g, ga);
        break;
      case Op::kSoftplus:
        for (size_t i = 0; i < ne; ++i)
          ga[i] += g[i] / (1.0 + std::exp(-av[i]));
        break;
      case Op::kOneMinusSq:
        k.mul_acc_scaled(ne, -2.0, av, g, ga);
        break;
      case Op::kMul:
        k.mul_acc(ne, bv, g, ga);
        k.mul_acc(ne, av, g, gb);
        break;
      case Op::kAddScaled:
        k.axpy(ne, 1.0, g, ga);
        k.axpy(ne, n.c0, g, gb);
        break;
      case Op::kScale:
        k.axpy(ne, n.c0, g, ga);
        break;
      case Op::kRowScale: {
        const Vec& w = aux_[n.aux];
        for (int i = 0; i < n.rows; ++i)
          k.axpy(n.cols, w[i], g + static_cast<size_t>(i) * n.cols,
                 ga + static_cast<size_t>(i) * n.cols);
        break;
      }
      case Op::kColSumW: {
        const Vec& w = aux_[n.aux];
        const Node& an = nodes_[n.a];
        for (int i = 0; i < an.rows; ++i)
          k.axpy(n.cols, w[i], g, ga + static_cast<size_t>(i) * n.cols);
        break;
      }
      case Op::kBroadcastRow:
        for (int i = 0; i < n.rows; ++i)
          k.axpy(n.cols, 1.0, g + static_cast<size_t>(i) * n.cols, ga);
        break;
      case Op::kScalarMul:
        k.axpy(ne, bv[0], g, ga);
        gb[0] += k.dot(ne, av, g);
        break;
      case Op::kRecip:
        for (size_t i = 0; i < ne; ++i) ga[i] -= val[i] * val[i] * g[i];
        break;
      case Op::kMeanSqRW: {
        const Node& an = nodes_[n.a];
        const double gs = g[0] / n.c0;
        if (n.aux < 0) {
          k.axpy(static_cast<size_t>(an.rows) * an.cols, 2.0 * gs, av, ga);
        } else {
          const Vec& w = aux_[n.aux];
          for (int i = 0; i < an.rows; ++i)
            k.axpy(an.cols, 2.0 * gs * w[i],
                   av + static_cast<size_t>(i) * an.cols,
                   ga + static_cast<size_t>(i) * an.cols);
        }
        break;
      }
      case Op::kReshape:
        k.axpy(ne, 1.0, g, ga);
        break;
    }
  }
}

}  // namespace semibolt::ad
