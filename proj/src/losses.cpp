#include "semibolt/losses.hpp"

#include <algorithm>
#include <cmath>

namespace semibolt::loss {

using nn::Method;

CollocationSet build_collocation(const spectral::HermiteBasis& basis, int nt,
                                 int nx_interior, double t_final, double x_min,
                                 double x_max) {
  require(nt >= 1 && nx_interior >= 1, "build_collocation: empty grid");
  CollocationSet c;
  c.nt = nt;
  c.nxi = nx_interior;
  c.nv = basis.num_nodes;
  c.t_final = t_final;
  c.x_left = x_min;
  c.x_right = x_max;
  c.times.resize(nt);
  for (int i = 0; i < nt; ++i) c.times[i] = (i + 1) * t_final / nt;
  c.x_interior.resize(nx_interior);
  double dx = (x_max - x_min) / (nx_interior + 1);
  for (int k = 0; k < nx_interior; ++k) c.x_interior[k] = x_min + (k + 1) * dx;

  c.interior_tx = RowMatrix(2, nt * nx_interior);
  int col = 0;
  for (int i = 0; i < nt; ++i)
    for (int k = 0; k < nx_interior; ++k, ++col) {
      c.interior_tx(0, col) = c.times[i];
      c.interior_tx(1, col) = c.x_interior[k];
    }
  return c;
}

namespace {

uint64_t splitmix(uint64_t& s) {
  s += 0x9e3779b97f4a7c15ULL;
  uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

ObservationSet make_observations(const classic::ReferenceRun& run,
                                 const classic::SpatialGrid& grid, int n_rho,
                                 int n_phi, uint64_t seed, double noise) {
  const int nlev = static_cast<int>(run.times.size());
  const int nx = grid.nx;
  const int npts = nlev * nx;
  require(n_rho <= npts, "make_observations: more samples than grid points");
  require(n_phi <= npts, "make_observations: more samples than grid points");
  require(n_phi == 0 || !run.phi.empty(),
          "make_observations: run has no potential trajectory");

  uint64_t s = seed;
  auto sample_ids = [&](int n) {
    std::vector<int> ids(npts);
    for (int i = 0; i < npts; ++i) ids[i] = i;
    for (int i = npts - 1; i > 0; --i) {
      int j = static_cast<int>(splitmix(s) % (i + 1));
      std::swap(ids[i], ids[j]);
    }
    ids.resize(n);
    return ids;
  };
  auto gauss = [&]() {
    double u1 = (splitmix(s) >> 11) * 0x1.0p-53;
    double u2 = (splitmix(s) >> 11) * 0x1.0p-53;
    u1 = std::max(u1, 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  };

  ObservationSet obs;
  obs.seed = seed;
  {
    auto ids = sample_ids(n_rho);
    obs.rho_points = RowMatrix(2, n_rho);
    obs.rho_values.resize(n_rho);
    for (int k = 0; k < n_rho; ++k) {
      int lev = ids[k] / nx, ix = ids[k] % nx;
      obs.rho_points(0, k) = run.times[lev];
      obs.rho_points(1, k) = grid.nodes[ix];
      obs.rho_values[k] = run.rho[lev][ix] + (noise > 0 ? noise * gauss() : 0.0);
    }
  }
  if (n_phi > 0) {
    auto ids = sample_ids(n_phi);
    obs.phi_points = RowMatrix(2, n_phi);
    obs.phi_values.resize(n_phi);
    for (int k = 0; k < n_phi; ++k) {
      int lev = ids[k] / nx, ix = ids[k] % nx;
      obs.phi_points(0, k) = run.times[lev];
      obs.phi_points(1, k) = grid.nodes[ix];
      obs.phi_values[k] = run.phi[lev][ix] + (noise > 0 ? noise * gauss() : 0.0);
    }
  }
  return obs;
}

// ----------------------------------------------------------------------------

struct TrainingProgram::Impl {
  ad::Tape tape;
  nn::NetworkBundle* bundle = nullptr;

  int macro = -1, micro = -1, bc = -1, ic = -1, diffusion = -1, data_rho = -1,
      data_phi = -1, poisson = -1, total = -1;
  int macro_res = -1, micro_res = -1;
  int sigma_node = -1, sigma_param = -1;
  bool sigma_trainable = false;

  struct NetGrads {
    std::string name;
    nn::TapeNet tn;
  };
  std::vector<NetGrads> train_nets;

  LossBreakdown read() const {
    LossBreakdown b;
    auto val = [&](int id) { return id >= 0 ? tape.scalar(id) : 0.0; };
    b.macro = val(macro);
    b.micro = val(micro);
    b.bc = val(bc);
    b.ic = val(ic);
    b.diffusion = val(diffusion);
    b.data_rho = val(data_rho);
    b.data_phi = val(data_phi);
    b.poisson = val(poisson);
    b.total = val(total);
    return b;
  }
};

namespace {

struct RhoN {
  int v = -1, dt = -1, dx = -1, dxx = -1;
};
struct GN {
  int psi = -1, dt = -1, dx = -1, dvg = -1;
};

struct Builder {
  ad::Tape& tape;
  nn::NetworkBundle& b;
  const BuildOptions& o;
  const CollocationSet& c;
  const spectral::HermiteBasis& basis;
  const PenaltyWeights& w;
  const PhiSpec& phi;
  const ObservationSet* obs;

  std::vector<std::pair<const nn::DenseNet*, nn::TapeNet>> attached;

  Vec vvec, mvec, wm, minus2v, two_v, vwm, w_inflow_l, w_inflow_r;

  const nn::TapeNet& attach_once(const nn::DenseNet& net) {
    for (auto& [p, tn] : attached)
      if (p == &net) return tn;
    attached.emplace_back(&net, nn::attach(tape, net));
    return attached.back().second;
  }

  void init_rows() {
    int nv = basis.num_nodes;
    vvec = basis.nodes;
    mvec = basis.maxwellian_at_nodes;
    wm = basis.weights_maxwellian;
    minus2v.resize(nv);
    two_v.resize(nv);
    vwm.resize(nv);
    w_inflow_l.assign(nv, 0.0);
    w_inflow_r.assign(nv, 0.0);
    for (int j = 0; j < nv; ++j) {
      minus2v[j] = -2.0 * vvec[j];
      two_v[j] = 2.0 * vvec[j];
      vwm[j] = vvec[j] * wm[j];
      if (vvec[j] > 0.0) w_inflow_l[j] = basis.weights_gh[j];
      if (vvec[j] < 0.0) w_inflow_r[j] = basis.weights_gh[j];
    }
  }

  int tx_const(const RowMatrix& pts) {
    return tape.constant(pts.data.data(), pts.rows, pts.cols);
  }

  // velocity-major kinetic companion of a (t, x) batch: col = j * bsz + i
  int kinetic_const(const RowMatrix& tx) {
    int nv = basis.num_nodes, bsz = tx.cols;
    RowMatrix kin(3, nv * bsz);
    for (int j = 0; j < nv; ++j)
      for (int i = 0; i < bsz; ++i) {
        int col = j * bsz + i;
        kin(0, col) = tx(0, i);
        kin(1, col) = tx(1, i);
        kin(2, col) = basis.nodes[j];
      }
    return tape.constant(kin.data.data(), 3, nv * bsz);
  }

  nn::NetEval eval_net(const nn::DenseNet& net, int x_node,
                       std::initializer_list<int> coords, int dd = -1) {
    std::vector<int> cs(coords);
    return nn::build_mlp(tape, attach_once(net), x_node, cs, dd);
  }

  // method density with (t, x) derivatives; diff_xx additionally propagates
  // the second x-derivative of the low-fidelity part
  struct RhoPair {
    RhoN method;  // the density the kinetic residuals see
    RhoN diff;    // the low-fidelity part alone (bi methods)
  };
  RhoPair rho_with_derivs(int tx_node, bool diff_xx) {
    RhoPair out;
    if (o.method == Method::kPinn || o.method == Method::kApnn) {
      if (!b.rho_apnn) throw config_error("loss: density network missing");
      auto ev = eval_net(*b.rho_apnn, tx_node, {0, 1});
      out.method = {ev.value, ev.d[0], ev.d[1], -1};
      return out;
    }
    if (!b.rho_diff || !b.rho_corr)
      throw config_error("loss: bi-fidelity networks missing");
    auto evd = diff_xx ? eval_net(*b.rho_diff, tx_node, {0, 1}, 1)
                       : eval_net(*b.rho_diff, tx_node, {0, 1});
    auto evc = eval_net(*b.rho_corr, tx_node, {0, 1});
    out.diff = {evd.value, evd.d[0], evd.d[1], evd.dxx};
    double cbi = o.method == Method::kBiExplicit ? o.eps : 1.0;
    out.method.v = tape.add_scaled(evd.value, evc.value, cbi);
    out.method.dt = tape.add_scaled(evd.d[0], evc.d[0], cbi);
    out.method.dx = tape.add_scaled(evd.d[1], evc.d[1], cbi);
    return out;
  }

  // method density values only (data terms)
  int rho_values_at(int tx_node) {
    if (o.method == Method::kPinn || o.method == Method::kApnn) {
      if (!b.rho_apnn) throw config_error("loss: density network missing");
      return eval_net(*b.rho_apnn, tx_node, {}).value;
    }
    if (!b.rho_diff || !b.rho_corr)
      throw config_error("loss: bi-fidelity networks missing");
    int vd = eval_net(*b.rho_diff, tx_node, {}).value;
    int vc = eval_net(*b.rho_corr, tx_node, {}).value;
    double cbi = o.method == Method::kBiExplicit ? o.eps : 1.0;
    return tape.add_scaled(vd, vc, cbi);
  }

  int project(int raw, int bsz) {
    int nv = basis.num_nodes;
    int m = tape.reshape(raw, nv, bsz);
    int mom = tape.col_sum_w(m, wm);
    return tape.sub(m, tape.broadcast_row(mom, nv));
  }

  GN g_with_derivs(int kin_node, int bsz) {
    if (!b.g) throw config_error("loss: g network missing");
    auto ev = eval_net(*b.g, kin_node, {0, 1});
    GN g;
    g.psi = project(ev.value, bsz);
    g.dt = project(ev.d[0], bsz);
    g.dx = project(ev.d[1], bsz);
    int nv = basis.num_nodes;
    int dvc = tape.constant(basis.dv_apply.data.data(), nv, nv);
    int mom = tape.col_sum_w(g.psi, wm);
    g.dvg = tape.add(
        tape.add(tape.matmul(dvc, g.psi), tape.row_scale(g.psi, minus2v)),
        tape.row_scale(tape.broadcast_row(mom, nv), two_v));
    return g;
  }

  int g_values(int kin_node, int bsz) {
    if (!b.g) throw config_error("loss: g network missing");
    return project(eval_net(*b.g, kin_node, {}).value, bsz);
  }

  // Q(g)/M for a constant scattering kernel, sigma as a tape scalar
  int qtilde(int psi, int sigma) {
    int nv = basis.num_nodes;
    int mom = tape.col_sum_w(psi, wm);
    return tape.scalar_mul(tape.sub(tape.broadcast_row(mom, nv), psi), sigma);
  }

  // phi_x (and optionally phi_xx) on a (t,x) batch
  struct PhiN {
    int val = -1, dx = -1, dxx = -1;
  };
  PhiN phi_on(const RowMatrix& tx, int tx_node, bool need_xx, bool need_val) {
    PhiN p;
    if (phi.is_net()) {
      auto ev = need_xx ? eval_net(*phi.net, tx_node, {1}, 1)
                        : eval_net(*phi.net, tx_node, {1});
      p.val = ev.value;
      p.dx = ev.d[0];
      p.dxx = ev.dxx;
      return p;
    }
    if (!phi.analytic.dphi) throw config_error("loss: potential missing");
    Vec dx(tx.cols), dxx(tx.cols), val(tx.cols);
    for (int i = 0; i < tx.cols; ++i) {
      dx[i] = phi.analytic.dphi(tx(0, i), tx(1, i));
      if (need_xx) dxx[i] = phi.analytic.d2phi(tx(0, i), tx(1, i));
      if (need_val) val[i] = phi.analytic.phi(tx(0, i), tx(1, i));
    }
    p.dx = tape.constant(dx.data(), 1, tx.cols);
    if (need_xx) p.dxx = tape.constant(dxx.data(), 1, tx.cols);
    if (need_val) p.val = tape.constant(val.data(), 1, tx.cols);
    return p;
  }
};

}  // namespace

TrainingProgram::TrainingProgram(nn::NetworkBundle& bundle,
                                 const BuildOptions& opts,
                                 const CollocationSet& colloc,
                                 const spectral::HermiteBasis& basis,
                                 const PenaltyWeights& weights,
                                 const PhiSpec& phi, const ObservationSet* obs)
    : impl_(std::make_shared<Impl>()) {
  Impl& im = *impl_;
  im.bundle = &bundle;
  Builder bld{im.tape, bundle, opts,  colloc, basis, weights, phi, obs,
              {},      {},     {},    {},     {},    {},      {},  {},
              {}};
  bld.init_rows();
  ad::Tape& tape = im.tape;

  const int nv = basis.num_nodes;
  const int n1 = colloc.n1();

  if (opts.include_model && !opts.bc_ic_only &&
      opts.method == Method::kPinn && opts.eps == 0.0)
    throw std::invalid_argument(
        "pinn loss: eps = 0 leaves the 1/eps collision term undefined");

  // sigma as a tape scalar: trainable through softplus, or frozen constant
  if (opts.sigma_trainable) {
    im.sigma_param = tape.param(&bundle.sigma_raw, 1, 1);
    im.sigma_node = tape.softplus(im.sigma_param);
    im.sigma_trainable = true;
  } else {
    im.sigma_node = tape.constant_fill(opts.sigma_fixed, 1, 1);
  }

  VelocityProfile fbc = opts.f_bc ? opts.f_bc : spectral::maxwellian;
  VelocityProfile fic = opts.f_ic ? opts.f_ic : spectral::maxwellian;

  const bool need_diff_xx =
      opts.include_diffusion && opts.diffusion_variant == DiffusionVariant::kV1;
  const bool need_phi_xx = need_diff_xx || opts.include_poisson;

  // ---- interior batch -------------------------------------------------------
  int tx_int = -1, kin_int = -1;
  Builder::RhoPair rho_int;
  GN g_int;
  Builder::PhiN phi_int;
  const bool model_interior = opts.include_model && !opts.bc_ic_only;
  const bool need_interior =
      model_interior || opts.include_diffusion || opts.include_poisson;
  if (need_interior) {
    tx_int = bld.tx_const(colloc.interior_tx);
    phi_int = bld.phi_on(colloc.interior_tx, tx_int, need_phi_xx,
                         /*need_val=*/phi.is_net());
    rho_int = bld.rho_with_derivs(tx_int, need_diff_xx);
    const bool need_g = model_interior ||
                        (opts.include_diffusion &&
                         opts.diffusion_variant == DiffusionVariant::kV2);
    if (need_g) {
      kin_int = bld.kinetic_const(colloc.interior_tx);
      g_int = bld.g_with_derivs(kin_int, n1);
    }
  }

  auto micro_macro_residuals = [&](const RhoN& rho, double eps, int& mac_out,
                                   int& mic_out) {
    int phix_kin = tape.broadcast_row(phi_int.dx, nv);
    // micro: eps^2 dt_g + eps (I-Pi)(v dx_g + phi_x dv_g)
    //        + v dx_rho M - 2 v rho phi_x M - Q(g)
    int h = tape.add(tape.row_scale(g_int.dx, bld.vvec),
                     tape.mul(phix_kin, g_int.dvg));
    int hm = tape.col_sum_w(h, bld.wm);
    int imph = tape.sub(h, tape.broadcast_row(hm, nv));
    int r = tape.add_scaled(tape.scale(g_int.dt, eps * eps), imph, eps);
    r = tape.add(r, tape.row_scale(tape.broadcast_row(rho.dx, nv), bld.vvec));
    r = tape.add(r, tape.row_scale(
                        tape.mul(tape.broadcast_row(rho.v, nv), phix_kin),
                        bld.minus2v));
    r = tape.sub(r, bld.qtilde(g_int.psi, im.sigma_node));
    mic_out = tape.row_scale(r, bld.mvec);

    // macro: dt_rho + d_x <v g> + phi_x <dv_g>
    int vgx = tape.col_sum_w(g_int.dx, bld.vwm);
    int dvmom = tape.col_sum_w(g_int.dvg, bld.wm);
    mac_out =
        tape.add(tape.add(rho.dt, vgx), tape.mul(phi_int.dx, dvmom));
  };

  // ---- boundary / initial machinery ------------------------------------------
  struct SideBatch {
    RowMatrix tx;
    int tx_node = -1, kin_node = -1;
  };
  auto make_side = [&](double xb) {
    SideBatch s;
    s.tx = RowMatrix(2, colloc.nt);
    for (int i = 0; i < colloc.nt; ++i) {
      s.tx(0, i) = colloc.times[i];
      s.tx(1, i) = xb;
    }
    s.tx_node = bld.tx_const(s.tx);
    return s;
  };
  auto profile_const = [&](const VelocityProfile& f, int bsz) {
    RowMatrix m(nv, bsz);
    for (int j = 0; j < nv; ++j)
      for (int i = 0; i < bsz; ++i) m(j, i) = f(basis.nodes[j]);
    return tape.constant(m.data.data(), nv, bsz);
  };

  SideBatch left, right, initial;
  const bool need_bc_ic = opts.include_model || opts.include_diffusion ||
                          opts.include_poisson;
  if (need_bc_ic) {
    left = make_side(colloc.x_left);
    right = make_side(colloc.x_right);
    initial.tx = RowMatrix(2, colloc.nxi);
    for (int k = 0; k < colloc.nxi; ++k) {
      initial.tx(0, k) = 0.0;
      initial.tx(1, k) = colloc.x_interior[k];
    }
    initial.tx_node = bld.tx_const(initial.tx);
  }

  // bc/ic of the composition rho*M + eps*g against the inflow/initial data;
  // rho_at must yield density VALUES on the given tx batch
  auto bc_terms = [&](auto&& rho_at, double eps, double l1, double l2,
                      int& bc_out, int& ic_out) {
    auto f_residual = [&](SideBatch& s, const VelocityProfile& f) {
      int bsz = s.tx.cols;
      int rho_v = rho_at(s.tx_node);
      int r = tape.row_scale(tape.broadcast_row(rho_v, nv), bld.mvec);
      if (eps != 0.0) {
        if (s.kin_node < 0) s.kin_node = bld.kinetic_const(s.tx);
        int psi = bld.g_values(s.kin_node, bsz);
        r = tape.add_scaled(r, tape.row_scale(psi, bld.mvec), eps);
      }
      return tape.sub(r, profile_const(f, bsz));
    };
    int rl = f_residual(left, fbc);
    int rr = f_residual(right, fbc);
    int bl = tape.mean_sq_rw(rl, bld.w_inflow_l, colloc.n3());
    int br = tape.mean_sq_rw(rr, bld.w_inflow_r, colloc.n3());
    bc_out = tape.scale(tape.add(bl, br), l1);
    int ri = f_residual(initial, fic);
    ic_out = tape.scale(tape.mean_sq_rw(ri, {}, colloc.n4()), l2);
  };

  // ---- model (kinetic / micro-macro) term -------------------------------------
  if (model_interior) {
    if (opts.method == Method::kPinn) {
      // | eps dt_f + v dx_f + phi_x dv_f - (1/eps) Q(f) |^2, f = rho M + eps g
      int phix_kin = tape.broadcast_row(phi_int.dx, nv);
      int psi_f = tape.add_scaled(tape.broadcast_row(rho_int.method.v, nv),
                                  g_int.psi, opts.eps);
      int dpsi_t = tape.add_scaled(tape.broadcast_row(rho_int.method.dt, nv),
                                   g_int.dt, opts.eps);
      int dpsi_x = tape.add_scaled(tape.broadcast_row(rho_int.method.dx, nv),
                                   g_int.dx, opts.eps);
      int dvf = tape.add_scaled(
          tape.row_scale(tape.broadcast_row(rho_int.method.v, nv),
                         bld.minus2v),
          g_int.dvg, opts.eps);
      int r = tape.scale(dpsi_t, opts.eps);
      r = tape.add(r, tape.row_scale(dpsi_x, bld.vvec));
      r = tape.add(r, tape.mul(phix_kin, dvf));
      r = tape.add_scaled(r, bld.qtilde(psi_f, im.sigma_node),
                          -1.0 / opts.eps);
      im.micro_res = tape.row_scale(r, bld.mvec);
      im.micro = tape.mean_sq_rw(im.micro_res, {}, colloc.n2());
    } else {
      micro_macro_residuals(rho_int.method, opts.eps, im.macro_res,
                            im.micro_res);
      im.micro = tape.mean_sq_rw(im.micro_res, {}, colloc.n2());
      im.macro = tape.mean_sq_rw(im.macro_res, {}, colloc.n1());
    }
  }
  if (opts.include_model) {
    auto rho_at = [&](int node) { return bld.rho_values_at(node); };
    bc_terms(rho_at, opts.eps, weights.lambda1, weights.lambda2, im.bc, im.ic);
  }

  // ---- diffusion term ----------------------------------------------------------
  if (opts.include_diffusion) {
    if (opts.method == Method::kPinn || opts.method == Method::kApnn)
      throw config_error("diffusion loss requires the bi-fidelity networks");
    int interior;
    if (opts.diffusion_variant == DiffusionVariant::kV1) {
      // dt rho_d - T dxx rho_d + 2 T (dx rho_d phi_x + rho_d phi_xx),
      // T = <v^2 M>/sigma for a constant kernel
      double v2m = 0.0;
      for (int j = 0; j < nv; ++j)
        v2m += bld.vvec[j] * bld.vvec[j] * bld.wm[j];
      int t_node = tape.scale(tape.recip(im.sigma_node), v2m);
      int drift = tape.add(tape.mul(rho_int.diff.dx, phi_int.dx),
                           tape.mul(rho_int.diff.v, phi_int.dxx));
      int r = tape.sub(rho_int.diff.dt, tape.scalar_mul(rho_int.diff.dxx, t_node));
      r = tape.add(r, tape.scale(tape.scalar_mul(drift, t_node), 2.0));
      interior = tape.mean_sq_rw(r, {}, colloc.n1());
    } else {
      // residuals of the limiting system with the low-fidelity density
      int phix_kin = tape.broadcast_row(phi_int.dx, nv);
      int vgx = tape.col_sum_w(g_int.dx, bld.vwm);
      int dvmom = tape.col_sum_w(g_int.dvg, bld.wm);
      int rmac = tape.add(tape.add(rho_int.diff.dt, vgx),
                          tape.mul(phi_int.dx, dvmom));
      int r = tape.row_scale(tape.broadcast_row(rho_int.diff.dx, nv), bld.vvec);
      r = tape.add(r, tape.row_scale(
                          tape.mul(tape.broadcast_row(rho_int.diff.v, nv),
                                   phix_kin),
                          bld.minus2v));
      r = tape.sub(r, bld.qtilde(g_int.psi, im.sigma_node));
      r = tape.row_scale(r, bld.mvec);
      interior = tape.add(tape.mean_sq_rw(rmac, {}, colloc.n1()),
                          tape.mean_sq_rw(r, {}, colloc.n2()));
    }
    auto rho_diff_at = [&](int node) {
      return bld.eval_net(*bundle.rho_diff, node, {}).value;
    };
    int dbc, dic;
    bc_terms(rho_diff_at, 0.0, weights.lambda1_diff, weights.lambda2_diff, dbc,
             dic);
    im.diffusion = tape.add(tape.add(interior, dbc), dic);
  }

  // ---- data terms ---------------------------------------------------------------
  if (opts.include_data_rho) {
    if (!obs || obs->rho_values.empty())
      throw std::invalid_argument("data loss: no density observations");
    int pts = bld.tx_const(obs->rho_points);
    int pred = bld.rho_values_at(pts);
    int target = tape.constant(obs->rho_values.data(), 1,
                               static_cast<int>(obs->rho_values.size()));
    int r = tape.sub(pred, target);
    im.data_rho = tape.scale(
        tape.mean_sq_rw(r, {}, static_cast<double>(obs->rho_values.size())),
        weights.w_data_rho);
  }
  if (opts.include_data_phi) {
    if (!obs || obs->phi_values.empty())
      throw std::invalid_argument("data loss: no potential observations");
    if (!phi.is_net())
      throw config_error("data loss: potential observations need a phi net");
    int pts = bld.tx_const(obs->phi_points);
    int pred = bld.eval_net(*phi.net, pts, {}).value;
    int target = tape.constant(obs->phi_values.data(), 1,
                               static_cast<int>(obs->phi_values.size()));
    int r = tape.sub(pred, target);
    im.data_phi = tape.scale(
        tape.mean_sq_rw(r, {}, static_cast<double>(obs->phi_values.size())),
        weights.w_data_phi);
  }

  // ---- Poisson penalty -------------------------------------------------------------
  if (opts.include_poisson) {
    if (!phi.is_net())
      throw config_error("poisson loss: needs the phi network");
    if (!opts.doping) throw config_error("poisson loss: doping profile missing");
    Vec cvals(n1);
    for (int i = 0; i < n1; ++i)
      cvals[i] = opts.doping(colloc.interior_tx(1, i));
    int c_node = tape.constant(cvals.data(), 1, n1);
    // pretraining ties phi to the low-fidelity density; otherwise the
    // method density closes the coupling
    int rho_here = (!opts.include_model && opts.include_diffusion)
                       ? rho_int.diff.v
                       : rho_int.method.v;
    if (rho_here < 0) rho_here = bld.rho_values_at(tx_int);
    int r = tape.sub(tape.scale(phi_int.dxx, opts.poisson_beta),
                     tape.sub(rho_here, c_node));
    int p_int = tape.mean_sq_rw(r, {}, colloc.n1());
    int phi_l = bld.eval_net(*phi.net, left.tx_node, {}).value;
    int phi_r = bld.eval_net(*phi.net, right.tx_node, {}).value;
    int vb = tape.constant_fill(opts.poisson_bias, 1, colloc.nt);
    int p_bc = tape.add(tape.mean_sq_rw(phi_l, {}, colloc.nt),
                        tape.mean_sq_rw(tape.sub(phi_r, vb), {}, colloc.nt));
    im.poisson = tape.scale(tape.add(p_int, p_bc), weights.w_poisson);
  }

  // ---- total ------------------------------------------------------------------------
  int total = -1;
  for (int part : {im.macro, im.micro, im.bc, im.ic, im.diffusion, im.data_rho,
                   im.data_phi, im.poisson})
    if (part >= 0) total = total < 0 ? part : tape.add(total, part);
  require(total >= 0, "loss: no active terms");
  im.total = total;

  // ---- trainable blocks ----------------------------------------------------------
  auto add_block = [&](const char* name, std::optional<nn::DenseNet>& net,
                       bool trainable) {
    if (!net || !trainable) return;
    for (auto& [p, tn] : bld.attached)
      if (p == &*net) {
        impl_->train_nets.push_back({name, tn});
        blocks_.push_back({name, net->theta.data(), net->theta.size()});
        return;
      }
  };
  // every network reached by the recorded loss is trainable unless the
  // low-fidelity part has been frozen after its pre-training stage
  add_block("rho_apnn", bundle.rho_apnn, true);
  add_block("rho_diff", bundle.rho_diff, !bundle.rho_diff_frozen);
  add_block("rho_corr", bundle.rho_corr, true);
  add_block("g", bundle.g, true);
  add_block("phi", bundle.phi, true);
  if (opts.sigma_trainable)
    blocks_.push_back({"sigma", &bundle.sigma_raw, 1});

  im.tape.finalize(true);
}

LossBreakdown TrainingProgram::eval() {
  impl_->tape.forward();
  return impl_->read();
}

size_t TrainingProgram::trainable_count() const {
  size_t n = 0;
  for (const auto& b : blocks_) n += b.count;
  return n;
}

LossBreakdown TrainingProgram::eval_grad(Vec& grad) {
  Impl& im = *impl_;
  im.tape.forward();
  im.tape.backward(im.total);
  grad.clear();
  grad.reserve(trainable_count());
  for (const auto& tnb : im.train_nets) {
    const nn::TapeNet& tn = tnb.tn;
    for (size_t l = 0; l < tn.w_nodes.size(); ++l) {
      auto gw = im.tape.grad(tn.w_nodes[l]);
      grad.insert(grad.end(), gw.begin(), gw.end());
      auto gb = im.tape.grad(tn.b_nodes[l]);
      grad.insert(grad.end(), gb.begin(), gb.end());
    }
  }
  if (im.sigma_trainable) grad.push_back(im.tape.grad(im.sigma_param)[0]);
  return im.read();
}

double TrainingProgram::sigma_value() const {
  return impl_->sigma_trainable ? nn::softplus(impl_->bundle->sigma_raw)
                                : impl_->tape.scalar(impl_->sigma_node);
}

Vec TrainingProgram::macro_residuals() const {
  require(impl_->macro_res >= 0, "no macro residuals in this program");
  auto v = impl_->tape.value(impl_->macro_res);
  return Vec(v.begin(), v.end());
}

Vec TrainingProgram::micro_residuals() const {
  require(impl_->micro_res >= 0, "no micro residuals in this program");
  auto v = impl_->tape.value(impl_->micro_res);
  return Vec(v.begin(), v.end());
}

// ---- functional wrappers ---------------------------------------------------------

namespace {

LossBreakdown run_once(nn::NetworkBundle& bundle, const BuildOptions& o,
                       const PhiSpec& phi, const CollocationSet& c,
                       const spectral::HermiteBasis& basis,
                       const PenaltyWeights& w,
                       const ObservationSet* obs = nullptr) {
  TrainingProgram p(bundle, o, c, basis, w, phi, obs);
  return p.eval();
}

}  // namespace

LossBreakdown pinn_loss(nn::NetworkBundle& bundle, double eps, double sigma,
                        const PhiSpec& phi, const CollocationSet& colloc,
                        const spectral::HermiteBasis& basis,
                        const PenaltyWeights& weights) {
  BuildOptions o;
  o.method = Method::kPinn;
  o.eps = eps;
  o.sigma_fixed = sigma;
  return run_once(bundle, o, phi, colloc, basis, weights);
}

LossBreakdown apnn_loss(nn::NetworkBundle& bundle, double eps, double sigma,
                        const PhiSpec& phi, const CollocationSet& colloc,
                        const spectral::HermiteBasis& basis,
                        const PenaltyWeights& weights) {
  BuildOptions o;
  o.method = Method::kApnn;
  o.eps = eps;
  o.sigma_fixed = sigma;
  return run_once(bundle, o, phi, colloc, basis, weights);
}

LossBreakdown biapnn_loss(nn::NetworkBundle& bundle, nn::Method mode,
                          double eps, double sigma, const PhiSpec& phi,
                          const CollocationSet& colloc,
                          const spectral::HermiteBasis& basis,
                          const PenaltyWeights& weights) {
  require(mode == Method::kBiExplicit || mode == Method::kBiImplicit,
          "biapnn_loss: mode must be a bi-fidelity formulation");
  BuildOptions o;
  o.method = mode;
  o.eps = eps;
  o.sigma_fixed = sigma;
  return run_once(bundle, o, phi, colloc, basis, weights);
}

LossBreakdown diffusion_loss(nn::NetworkBundle& bundle, DiffusionVariant v,
                             double sigma, const PhiSpec& phi,
                             const CollocationSet& colloc,
                             const spectral::HermiteBasis& basis,
                             const PenaltyWeights& weights) {
  BuildOptions o;
  o.method = Method::kBiImplicit;
  o.eps = 0.0;
  o.include_model = false;
  o.include_diffusion = true;
  o.diffusion_variant = v;
  o.sigma_fixed = sigma;
  return run_once(bundle, o, phi, colloc, basis, weights);
}

std::pair<double, double> bc_ic_loss(nn::NetworkBundle& bundle,
                                     nn::Method method, double eps,
                                     const CollocationSet& colloc,
                                     const spectral::HermiteBasis& basis,
                                     const PenaltyWeights& weights,
                                     const VelocityProfile& f_bc,
                                     const VelocityProfile& f_ic) {
  BuildOptions o;
  o.method = method;
  o.eps = eps;
  o.bc_ic_only = true;
  o.f_bc = f_bc;
  o.f_ic = f_ic;
  PhiSpec phi;
  phi.analytic.phi = [](double, double) { return 0.0; };
  phi.analytic.dphi = [](double, double) { return 0.0; };
  phi.analytic.d2phi = [](double, double) { return 0.0; };
  LossBreakdown b = run_once(bundle, o, phi, colloc, basis, weights);
  return {b.bc, b.ic};
}

std::pair<double, double> data_loss(nn::NetworkBundle& bundle,
                                    nn::Method method, double eps,
                                    const ObservationSet& obs,
                                    const PenaltyWeights& weights) {
  BuildOptions o;
  o.method = method;
  o.eps = eps;
  o.include_model = false;
  o.include_data_rho = !obs.rho_values.empty();
  o.include_data_phi = !obs.phi_values.empty();
  if (!o.include_data_rho && !o.include_data_phi)
    throw std::invalid_argument("data_loss: empty observation set");
  spectral::HermiteBasis basis = spectral::build_basis(0, 1);
  CollocationSet c = build_collocation(basis, 1, 1);
  PhiSpec phi;
  if (bundle.phi) phi.net = &*bundle.phi;
  LossBreakdown b;
  TrainingProgram p(bundle, o, c, basis, weights, phi, &obs);
  b = p.eval();
  return {b.data_rho, b.data_phi};
}

double poisson_residual_loss(nn::NetworkBundle& bundle, nn::Method method,
                             double eps, double beta, double bias,
                             const std::function<double(double)>& doping,
                             const CollocationSet& colloc,
                             const spectral::HermiteBasis& basis,
                             const PenaltyWeights& weights) {
  BuildOptions o;
  o.method = method;
  o.eps = eps;
  o.include_model = false;
  o.include_poisson = true;
  o.poisson_beta = beta;
  o.poisson_bias = bias;
  o.doping = doping;
  PhiSpec phi;
  if (!bundle.phi) throw config_error("poisson_residual_loss: phi net missing");
  phi.net = &*bundle.phi;
  LossBreakdown b = run_once(bundle, o, phi, colloc, basis, weights);
  return b.poisson;
}

LossBreakdown total_inverse_loss(nn::NetworkBundle& bundle, nn::Method mode,
                                 double eps, const PhiSpec& phi,
                                 const CollocationSet& colloc,
                                 const spectral::HermiteBasis& basis,
                                 const PenaltyWeights& weights,
                                 const ObservationSet& obs,
                                 const BuildOptions* poisson_opts) {
  BuildOptions o;
  o.method = mode;
  o.eps = eps;
  o.sigma_trainable = true;
  o.include_model = true;
  o.include_diffusion =
      mode == Method::kBiExplicit || mode == Method::kBiImplicit;
  o.diffusion_variant = DiffusionVariant::kV1;
  o.include_data_rho = true;
  o.include_data_phi = !obs.phi_values.empty();
  if (poisson_opts) {
    o.include_poisson = true;
    o.poisson_beta = poisson_opts->poisson_beta;
    o.poisson_bias = poisson_opts->poisson_bias;
    o.doping = poisson_opts->doping;
  }
  return run_once(bundle, o, phi, colloc, basis, weights, &obs);
}

}  // namespace semibolt::loss
