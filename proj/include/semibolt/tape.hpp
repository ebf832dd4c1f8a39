#pragma once

#include <cstdint>

#include "semibolt/common.hpp"

// A recorded program of batched array operations with reverse-mode
// differentiation. Node values are rows x cols matrices whose rows are
// contiguous; the batch runs along columns. A program is built once per
// training stage (the collocation sets are static), then forward()/backward()
// run every epoch with zero allocation. Parameters live in caller-owned
// storage and are re-read on each forward pass, so an optimizer update is
// immediately visible.
//
// Only differentiable operations can be expressed, which makes
// "non-differentiable loss construction" unrepresentable by design.

namespace semibolt::ad {

enum class Op : uint8_t {
  kConst,
  kParam,
  kMatMul,        // a: m x k (weights), b: k x B
  kAddBias,       // a: m x B, b: m x 1
  kTanh,
  kExpNeg,        // exp(-x)
  kSoftplus,      // log(1 + exp(x))
  kOneMinusSq,    // 1 - x^2
  kMul,           // elementwise
  kAddScaled,     // a + c0 * b
  kScale,         // c0 * a
  kRowScale,      // row i scaled by aux[i]
  kColSumW,       // 1 x B, sum_i aux[i] * row_i
  kBroadcastRow,  // 1 x B -> rows x B
  kScalarMul,     // a: m x B, b: 1 x 1
  kRecip,         // 1 / x
  kMeanSqRW,      // scalar: sum_i aux[i] * |row_i|^2 / c0
  kReshape,       // same element count, new shape
};

struct Node {
  Op op;
  int rows = 0, cols = 0;
  int a = -1, b = -1;
  int aux = -1;
  double c0 = 0.0;
  size_t off = 0, goff = 0;
  const double* ext = nullptr;
};

class Tape {
 public:
  int constant(const double* data, int rows, int cols);
  int constant_fill(double v, int rows, int cols);
  int param(const double* data, int rows, int cols);

  int matmul(int w, int x);
  int add_bias(int x, int bias);
  int tanh_of(int x);
  int exp_neg(int x);
  int softplus(int x);
  int one_minus_sq(int x);
  int mul(int x, int y);
  int add(int x, int y) { return add_scaled(x, y, 1.0); }
  int sub(int x, int y) { return add_scaled(x, y, -1.0); }
  int add_scaled(int x, int y, double c);
  int scale(int x, double c);
  int row_scale(int x, std::span<const double> w);
  int col_sum_w(int x, std::span<const double> w);
  int broadcast_row(int x, int rows);
  int scalar_mul(int x, int s);
  int recip(int x);
  // sum_i roww[i] * |row_i|^2 / norm; empty roww means unit row weights
  int mean_sq_rw(int x, std::span<const double> roww, double norm);
  int reshape(int x, int rows, int cols);

  void finalize(bool need_grad = true);
  void forward();
  void backward(int seed);

  std::span<const double> value(int id) const;
  std::span<const double> grad(int id) const;
  double scalar(int id) const { return value(id)[0]; }

  const Node& node(int id) const { return nodes_[id]; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  int push(Node n);
  int store_aux(std::span<const double> v);
  size_t elems(int id) const {
    return static_cast<size_t>(nodes_[id].rows) * nodes_[id].cols;
  }

  std::vector<Node> nodes_;
  std::vector<Vec> aux_;
  Vec arena_, garena_;
  bool finalized_ = false;
  bool need_grad_ = true;
};

}  // namespace semibolt::ad
