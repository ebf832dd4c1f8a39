#include "semibolt/net.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "nlohmann/json.hpp"

namespace semibolt::nn {

size_t DenseNet::weight_offset(int l) const {
  size_t off = 0;
  for (int i = 0; i < l; ++i)
    off += weight_count(i) + static_cast<size_t>(widths[i + 1]);
  return off;
}

size_t DenseNet::bias_offset(int l) const {
  return weight_offset(l) + weight_count(l);
}

DenseNet xavier_init(const std::vector<int>& widths, uint64_t seed,
                     OutputTransform transform) {
  require(widths.size() >= 2, "xavier_init: need at least input and output");
  for (int w : widths) require(w >= 1, "xavier_init: widths must be positive");

  DenseNet net;
  net.widths = widths;
  net.transform = transform;
  net.seed = seed;
  size_t total = 0;
  for (size_t l = 0; l + 1 < widths.size(); ++l)
    total += static_cast<size_t>(widths[l + 1]) * widths[l] + widths[l + 1];
  net.theta.assign(total, 0.0);

  // splitmix64-seeded xorshift-free generator: the stream is fully specified
  // here, so runs do not depend on the standard library's distributions.
  uint64_t s = seed + 0x9e3779b97f4a7c15ULL;
  auto next_u64 = [&s]() {
    s += 0x9e3779b97f4a7c15ULL;
    uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  auto next_unit = [&]() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  };

  for (int l = 0; l < net.num_layers(); ++l) {
    double bound = std::sqrt(6.0 / (widths[l] + widths[l + 1]));
    double* w = net.weights(l);
    for (size_t i = 0; i < net.weight_count(l); ++i)
      w[i] = bound * (2.0 * next_unit() - 1.0);
    // biases stay zero
  }
  return net;
}

RowMatrix mlp_forward(const DenseNet& net, const RowMatrix& inputs) {
  require(inputs.rows == net.widths.front(), "mlp_forward: input width");
  ad::Tape tape;
  TapeNet tn = attach(tape, net);
  int x = tape.constant(inputs.data.data(), inputs.rows, inputs.cols);
  NetEval ev = build_mlp(tape, tn, x, {});
  tape.finalize(false);
  tape.forward();
  RowMatrix out(net.widths.back(), inputs.cols);
  auto v = tape.value(ev.value);
  std::copy(v.begin(), v.end(), out.data.begin());
  return out;
}

ForwardWithDerivs forward_with_input_derivs(const DenseNet& net,
                                            const RowMatrix& inputs) {
  require(inputs.rows == net.widths.front(),
          "forward_with_input_derivs: input width");
  ad::Tape tape;
  TapeNet tn = attach(tape, net);
  int x = tape.constant(inputs.data.data(), inputs.rows, inputs.cols);
  std::vector<int> coords(inputs.rows);
  for (int c = 0; c < inputs.rows; ++c) coords[c] = c;
  NetEval ev = build_mlp(tape, tn, x, coords);
  tape.finalize(false);
  tape.forward();

  ForwardWithDerivs out;
  out.values = RowMatrix(net.widths.back(), inputs.cols);
  auto v = tape.value(ev.value);
  std::copy(v.begin(), v.end(), out.values.data.begin());
  for (int c = 0; c < inputs.rows; ++c) {
    RowMatrix j(net.widths.back(), inputs.cols);
    auto d = tape.value(ev.d[c]);
    std::copy(d.begin(), d.end(), j.data.begin());
    out.jacobian.push_back(std::move(j));
  }
  return out;
}

TapeNet attach(ad::Tape& tape, const DenseNet& net) {
  TapeNet tn;
  tn.net = &net;
  for (int l = 0; l < net.num_layers(); ++l) {
    tn.w_nodes.push_back(
        tape.param(net.weights(l), net.widths[l + 1], net.widths[l]));
    tn.b_nodes.push_back(tape.param(net.biases(l), net.widths[l + 1], 1));
  }
  return tn;
}

NetEval build_mlp(ad::Tape& tape, const TapeNet& tn, int x_node,
                  std::span<const int> d_coords, int dd_coord) {
  const DenseNet& net = *tn.net;
  const int in_dim = net.widths.front();
  const int bsz = tape.node(x_node).cols;
  require(tape.node(x_node).rows == in_dim, "build_mlp: input node width");
  const int nd = static_cast<int>(d_coords.size());
  int dd_slot = -1;
  for (int c = 0; c < nd; ++c)
    if (d_coords[c] == dd_coord) dd_slot = c;
  require(dd_coord < 0 || dd_slot >= 0,
          "build_mlp: dd_coord must be listed in d_coords");

  int cur = x_node;
  std::vector<int> d(nd);
  for (int c = 0; c < nd; ++c) {
    // one-hot tangent, broadcast across the batch
    Vec buf(static_cast<size_t>(in_dim) * bsz, 0.0);
    for (int j = 0; j < bsz; ++j)
      buf[static_cast<size_t>(d_coords[c]) * bsz + j] = 1.0;
    d[c] = tape.constant(buf.data(), in_dim, bsz);
  }
  int dd = dd_coord >= 0 ? tape.constant_fill(0.0, in_dim, bsz) : -1;

  const int nl = net.num_layers();
  for (int l = 0; l < nl; ++l) {
    int a = tape.add_bias(tape.matmul(tn.w_nodes[l], cur), tn.b_nodes[l]);
    std::vector<int> da(nd);
    for (int c = 0; c < nd; ++c) da[c] = tape.matmul(tn.w_nodes[l], d[c]);
    int dda = dd >= 0 ? tape.matmul(tn.w_nodes[l], dd) : -1;

    if (l == nl - 1) {
      cur = a;
      d = da;
      dd = dda;
      break;
    }
    int t = tape.tanh_of(a);
    int s = tape.one_minus_sq(t);  // sech^2
    for (int c = 0; c < nd; ++c) d[c] = tape.mul(s, da[c]);
    if (dd >= 0) {
      // z'' = s a'' - 2 t s (a')^2
      int ax = da[dd_slot];
      int t1 = tape.mul(s, dda);
      int t2 = tape.mul(tape.mul(t, s), tape.mul(ax, ax));
      dd = tape.add_scaled(t1, t2, -2.0);
    }
    cur = t;
  }

  NetEval ev;
  if (net.transform == OutputTransform::kIdentity) {
    ev.value = cur;
    ev.d = d;
    ev.dxx = dd;
  } else {
    int y = tape.exp_neg(cur);
    ev.value = y;
    ev.d.resize(nd);
    for (int c = 0; c < nd; ++c)
      ev.d[c] = tape.scale(tape.mul(y, d[c]), -1.0);
    if (dd >= 0) {
      // y = exp(-u): y'' = y ((u')^2 - u'')
      int ux = d[dd_slot];
      ev.dxx = tape.mul(y, tape.add_scaled(tape.mul(ux, ux), dd, -1.0));
    }
  }
  return ev;
}

double softplus(double x) { return x > 36.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  require(y > 0.0, "softplus_inverse: argument must be positive");
  return y > 36.0 ? y : std::log(std::expm1(y));
}

namespace {

struct Entry {
  const char* name;
  std::optional<DenseNet>* slot;
};

std::vector<Entry> entries(NetworkBundle& b) {
  return {{"rho_apnn", &b.rho_apnn},
          {"rho_diff", &b.rho_diff},
          {"rho_corr", &b.rho_corr},
          {"g", &b.g},
          {"phi", &b.phi}};
}

}  // namespace

Vec flatten_parameters(const NetworkBundle& b) {
  Vec flat;
  auto& mb = const_cast<NetworkBundle&>(b);
  for (auto& e : entries(mb))
    if (e.slot->has_value())
      flat.insert(flat.end(), (*e.slot)->theta.begin(), (*e.slot)->theta.end());
  flat.push_back(b.sigma_raw);
  return flat;
}

void unflatten_parameters(NetworkBundle& b, std::span<const double> flat) {
  size_t off = 0;
  for (auto& e : entries(b))
    if (e.slot->has_value()) {
      DenseNet& n = **e.slot;
      require(off + n.theta.size() <= flat.size(),
              "unflatten_parameters: vector too short");
      std::copy(flat.begin() + off, flat.begin() + off + n.theta.size(),
                n.theta.begin());
      off += n.theta.size();
    }
  require(off + 1 == flat.size(), "unflatten_parameters: length mismatch");
  b.sigma_raw = flat[off];
}

void save_checkpoint(const NetworkBundle& b, const std::string& path_prefix) {
  Vec flat = flatten_parameters(b);
  std::ofstream bin(path_prefix + ".bin", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));

  nlohmann::json j;
  j["layout"] = "layer-major, weights before biases, nets in fixed order, "
                "trailing sigma_raw";
  j["count"] = flat.size();
  auto& mb = const_cast<NetworkBundle&>(b);
  for (auto& e : entries(mb))
    if (e.slot->has_value()) {
      const DenseNet& n = **e.slot;
      nlohmann::json nj;
      nj["widths"] = n.widths;
      nj["transform"] = n.transform == OutputTransform::kIdentity
                            ? "identity"
                            : "negated_exponential";
      nj["seed"] = n.seed;
      j["nets"][e.name] = nj;
    }
  std::ofstream side(path_prefix + ".json");
  side << j.dump(2) << "\n";
}

void load_checkpoint(NetworkBundle& b, const std::string& path_prefix) {
  std::ifstream bin(path_prefix + ".bin", std::ios::binary);
  require(bin.good(), "load_checkpoint: cannot open " + path_prefix + ".bin");
  bin.seekg(0, std::ios::end);
  size_t bytes = static_cast<size_t>(bin.tellg());
  bin.seekg(0);
  Vec flat(bytes / sizeof(double));
  bin.read(reinterpret_cast<char*>(flat.data()),
           static_cast<std::streamsize>(bytes));
  unflatten_parameters(b, flat);
}

RhoView rho_from_bundle(const NetworkBundle& b, Method method, double eps,
                        const RowMatrix& tx_points) {
  require(tx_points.rows == 2, "rho_from_bundle: points must be 2 x B");
  auto eval = [&](const DenseNet& net) {
    auto fw = forward_with_input_derivs(net, tx_points);
    return fw;
  };
  const int bsz = tx_points.cols;
  RhoView out;
  out.value.assign(bsz, 0.0);
  out.dt.assign(bsz, 0.0);
  out.dx.assign(bsz, 0.0);

  auto add = [&](const ForwardWithDerivs& fw, double c) {
    for (int i = 0; i < bsz; ++i) {
      out.value[i] += c * fw.values(0, i);
      out.dt[i] += c * fw.jacobian[0](0, i);
      out.dx[i] += c * fw.jacobian[1](0, i);
    }
  };

  switch (method) {
    case Method::kPinn:
    case Method::kApnn:
      if (!b.rho_apnn) throw config_error("rho_from_bundle: missing rho net");
      add(eval(*b.rho_apnn), 1.0);
      break;
    case Method::kBiExplicit:
    case Method::kBiImplicit: {
      if (!b.rho_diff || !b.rho_corr)
        throw config_error("rho_from_bundle: missing bi-fidelity nets");
      add(eval(*b.rho_diff), 1.0);
      add(eval(*b.rho_corr), method == Method::kBiExplicit ? eps : 1.0);
      break;
    }
  }
  return out;
}

GView g_from_bundle(const NetworkBundle& b, const spectral::HermiteBasis& basis,
                    const RowMatrix& tx_points) {
  if (!b.g) throw config_error("g_from_bundle: missing g net");
  require(tx_points.rows == 2, "g_from_bundle: points must be 2 x B");
  require(b.g->widths.front() == 3, "g_from_bundle: g net must take (t,x,v)");

  const int nv = basis.num_nodes;
  const int bsz = tx_points.cols;
  // kinetic batch, velocity-major columns: col = j * bsz + i
  RowMatrix kin(3, nv * bsz);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < bsz; ++i) {
      int col = j * bsz + i;
      kin(0, col) = tx_points(0, i);
      kin(1, col) = tx_points(1, i);
      kin(2, col) = basis.nodes[j];
    }

  ad::Tape tape;
  TapeNet tn = attach(tape, *b.g);
  int x = tape.constant(kin.data.data(), 3, nv * bsz);
  int coords[2] = {0, 1};
  NetEval ev = build_mlp(tape, tn, x, coords);

  auto project = [&](int raw) {
    int m = tape.reshape(raw, nv, bsz);
    int mom = tape.col_sum_w(m, basis.weights_maxwellian);
    return tape.sub(m, tape.broadcast_row(mom, nv));
  };
  int psi = project(ev.value);
  int dpt = project(ev.d[0]);
  int dpx = project(ev.d[1]);

  Vec minus2v(nv), two_v(nv);
  for (int j = 0; j < nv; ++j) {
    minus2v[j] = -2.0 * basis.nodes[j];
    two_v[j] = 2.0 * basis.nodes[j];
  }
  int dvc = tape.constant(basis.dv_apply.data.data(), nv, nv);
  int mom = tape.col_sum_w(psi, basis.weights_maxwellian);
  int dvg = tape.add(
      tape.add(tape.matmul(dvc, psi), tape.row_scale(psi, minus2v)),
      tape.row_scale(tape.broadcast_row(mom, nv), two_v));

  tape.finalize(false);
  tape.forward();

  auto grab = [&](int id) {
    RowMatrix m(nv, bsz);
    auto v = tape.value(id);
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
  };
  GView out;
  out.psi = grab(psi);
  out.dt_psi = grab(dpt);
  out.dx_psi = grab(dpx);
  out.dv_g_over_m = grab(dvg);
  return out;
}

}  // namespace semibolt::nn
