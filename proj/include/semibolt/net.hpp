#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "semibolt/common.hpp"
#include "semibolt/hermite.hpp"
#include "semibolt/tape.hpp"

namespace semibolt::nn {

enum class OutputTransform { kIdentity, kNegatedExponential };

enum class Method { kPinn, kApnn, kBiExplicit, kBiImplicit };

// tanh MLP; parameters live in one flat vector ordered layer-major with
// weights before biases, which is also the checkpoint layout.
struct DenseNet {
  std::vector<int> widths;
  OutputTransform transform = OutputTransform::kIdentity;
  uint64_t seed = 0;
  Vec theta;

  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  size_t weight_count(int l) const {
    return static_cast<size_t>(widths[l + 1]) * widths[l];
  }
  size_t weight_offset(int l) const;
  size_t bias_offset(int l) const;
  double* weights(int l) { return theta.data() + weight_offset(l); }
  const double* weights(int l) const { return theta.data() + weight_offset(l); }
  double* biases(int l) { return theta.data() + bias_offset(l); }
  const double* biases(int l) const { return theta.data() + bias_offset(l); }
  size_t param_count() const { return theta.size(); }
};

// Uniform Xavier weights on [-sqrt(6/(fan_in+fan_out)), +...], zero biases,
// bit-reproducible for a given seed.
DenseNet xavier_init(const std::vector<int>& widths, uint64_t seed,
                     OutputTransform transform = OutputTransform::kIdentity);

// inputs: in_dim x B, returns out_dim x B
RowMatrix mlp_forward(const DenseNet& net, const RowMatrix& inputs);

struct ForwardWithDerivs {
  RowMatrix values;                // out_dim x B
  std::vector<RowMatrix> jacobian; // per input coord, out_dim x B
};
ForwardWithDerivs forward_with_input_derivs(const DenseNet& net,
                                            const RowMatrix& inputs);

// ---- tape builders ---------------------------------------------------------

// Parameter nodes of one net, registered once per tape so gradients of
// repeated evaluations accumulate in one place.
struct TapeNet {
  const DenseNet* net = nullptr;
  std::vector<int> w_nodes, b_nodes;
};
TapeNet attach(ad::Tape& tape, const DenseNet& net);

struct NetEval {
  int value = -1;
  std::vector<int> d;  // one node per requested input coordinate
  int dxx = -1;        // second derivative w.r.t. dd_coord, if requested
};

// x_node: in_dim x B constant/level node; d_coords: input coordinates whose
// first derivatives are propagated forward; dd_coord: optional coordinate for
// a second derivative (must also appear in d_coords). The tangent
// propagation is itself made of tape ops, so backward() differentiates
// derivative-bearing losses exactly.
NetEval build_mlp(ad::Tape& tape, const TapeNet& tn, int x_node,
                  std::span<const int> d_coords, int dd_coord = -1);

// ---- method bundles --------------------------------------------------------

struct NetworkBundle {
  std::optional<DenseNet> rho_apnn;  // pinn/apnn density net (exp(-u) output)
  std::optional<DenseNet> rho_diff;  // low-fidelity part (exp(-u) output)
  std::optional<DenseNet> rho_corr;  // signed correction (identity output)
  std::optional<DenseNet> g;         // micro part, inputs (t, x, v)
  std::optional<DenseNet> phi;       // self-consistent potential
  double sigma_raw = 0.0;            // sigma = softplus(sigma_raw)
  bool sigma_trainable = false;
  bool rho_diff_frozen = false;
};

double softplus(double x);
double softplus_inverse(double y);

// Checkpoints: raw doubles next to a JSON sidecar with widths/transform/seed.
Vec flatten_parameters(const NetworkBundle& b);
void unflatten_parameters(NetworkBundle& b, std::span<const double> flat);
void save_checkpoint(const NetworkBundle& b, const std::string& path_prefix);
void load_checkpoint(NetworkBundle& b, const std::string& path_prefix);

// ---- plain-value convenience views ------------------------------------------

// rho, d_t rho, d_x rho for the selected method at a batch of (t, x) points.
struct RhoView {
  Vec value, dt, dx;
};
RhoView rho_from_bundle(const NetworkBundle& b, Method method, double eps,
                        const RowMatrix& tx_points);

// psi = g/M on the velocity nodes for a batch of (t, x) points, plus first
// derivatives and the spectral v-derivative of g divided by M. Matrices are
// N_v x B.
struct GView {
  RowMatrix psi, dt_psi, dx_psi, dv_g_over_m;
};
GView g_from_bundle(const NetworkBundle& b, const spectral::HermiteBasis& basis,
                    const RowMatrix& tx_points);

}  // namespace semibolt::nn
