#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace semibolt {

/// Raised when a requested model/solver combination is not wired up
/// (missing network, missing doping profile, ...).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a linear solve or a time step fails numerically.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when the training loss exceeds the divergence guard.
struct divergence_error : numerical_error {
  using numerical_error::numerical_error;
};

using Vec = std::vector<double>;

/// Dense row-major matrix; rows are contiguous so per-row kernels vectorize.
struct RowMatrix {
  int rows = 0, cols = 0;
  Vec data;

  RowMatrix() = default;
  RowMatrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const {
    return data.data() + static_cast<size_t>(i) * cols;
  }
  double& operator()(int i, int j) {
    return data[static_cast<size_t>(i) * cols + j];
  }
  double operator()(int i, int j) const {
    return data[static_cast<size_t>(i) * cols + j];
  }
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace semibolt
