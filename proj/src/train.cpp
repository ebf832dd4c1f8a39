#include "semibolt/train.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace semibolt::train {

using nn::Method;

void adam_step(AdamState& st, std::span<double> params,
               std::span<const double> grad, double lr) {
  require(params.size() == grad.size(), "adam_step: shape mismatch");
  if (st.m.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  require(st.m.size() == params.size(), "adam_step: state shape mismatch");
  for (double gi : grad)
    if (!std::isfinite(gi))
      throw numerical_error("adam_step: non-finite gradient component");

  st.step_count += 1;
  const double b1 = st.beta1, b2 = st.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    double gi = grad[i];
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * gi;
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * gi * gi;
    double mhat = st.m[i] / bc1;
    double vhat = st.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps_adam);
  }
}

double lr_at(const LrSchedule& s, long epoch) {
  require(epoch >= 0, "lr_at: epoch must be non-negative");
  if (s.kind == LrSchedule::Kind::kConstant) return s.base_lr;
  double lr =
      s.base_lr * std::pow(s.decay_factor,
                           static_cast<double>(epoch / s.decay_interval));
  return std::max(lr, s.floor);
}

double relative_l2_error(std::span<const double> pred,
                         std::span<const double> ref) {
  require(pred.size() == ref.size(), "relative_l2_error: length mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - ref[i];
    num += d * d;
    den += ref[i] * ref[i];
  }
  require(den > 0.0, "relative_l2_error: reference norm is zero");
  return std::sqrt(num / den);
}

nn::NetworkBundle make_bundle(const TrainSpec& spec, bool with_phi) {
  auto widths = [](int in, const ArchSpec& a) {
    std::vector<int> w{in};
    for (int l = 0; l < a.hidden_layers; ++l) w.push_back(a.neurons);
    w.push_back(1);
    return w;
  };
  nn::NetworkBundle b;
  const uint64_t s = spec.seed;
  if (spec.method == Method::kPinn || spec.method == Method::kApnn) {
    b.rho_apnn = nn::xavier_init(widths(2, spec.rho), s * 6 + 1,
                                 nn::OutputTransform::kNegatedExponential);
  } else {
    b.rho_diff = nn::xavier_init(widths(2, spec.diff), s * 6 + 2,
                                 nn::OutputTransform::kNegatedExponential);
    b.rho_corr = nn::xavier_init(widths(2, spec.corr), s * 6 + 3);
  }
  b.g = nn::xavier_init(widths(3, spec.g), s * 6 + 4);
  if (with_phi) b.phi = nn::xavier_init(widths(2, spec.phi), s * 6 + 5);
  return b;
}

namespace {

struct AdamOverBlocks {
  AdamState st;

  void step(loss::TrainingProgram& prog, const Vec& grad, double lr) {
    size_t total = prog.trainable_count();
    if (st.m.empty()) {
      st.m.assign(total, 0.0);
      st.v.assign(total, 0.0);
    }
    for (double gi : grad)
      if (!std::isfinite(gi))
        throw numerical_error("adam: non-finite gradient");
    st.step_count += 1;
    const double b1 = st.beta1, b2 = st.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step_count));
    size_t off = 0;
    for (const auto& blk : prog.trainable_blocks()) {
      for (size_t i = 0; i < blk.count; ++i) {
        size_t k = off + i;
        double gi = grad[k];
        st.m[k] = b1 * st.m[k] + (1.0 - b1) * gi;
        st.v[k] = b2 * st.v[k] + (1.0 - b2) * gi * gi;
        blk.data[i] -=
            lr * (st.m[k] / bc1) / (std::sqrt(st.v[k] / bc2) + st.eps_adam);
      }
      off += blk.count;
    }
  }
};

std::string divergence_message(long epoch, const loss::LossBreakdown& lb) {
  std::ostringstream os;
  os << "training diverged at epoch " << epoch << ": total=" << lb.total
     << " macro=" << lb.macro << " micro=" << lb.micro << " bc=" << lb.bc
     << " ic=" << lb.ic << " diffusion=" << lb.diffusion
     << " data_rho=" << lb.data_rho << " data_phi=" << lb.data_phi
     << " poisson=" << lb.poisson;
  return os.str();
}

struct RelErrProbe {
  RowMatrix tx_final;     // 2 x nx at t = t_final
  const Vec* rho_ref;
  const Vec* phi_ref;

  double rho_error(const nn::NetworkBundle& b, Method method,
                   double eps) const {
    nn::RhoView rv = nn::rho_from_bundle(b, method, eps, tx_final);
    return relative_l2_error(rv.value, *rho_ref);
  }
  double phi_error(const nn::NetworkBundle& b) const {
    RowMatrix out = nn::mlp_forward(*b.phi, tx_final);
    return relative_l2_error(
        std::span<const double>(out.data.data(), out.data.size()), *phi_ref);
  }
};

RelErrProbe make_probe(const classic::ReferenceRun& ref,
                       const classic::SpatialGrid& grid, double t_final) {
  RelErrProbe p;
  p.tx_final = RowMatrix(2, grid.nx);
  for (int i = 0; i < grid.nx; ++i) {
    p.tx_final(0, i) = t_final;
    p.tx_final(1, i) = grid.nodes[i];
  }
  p.rho_ref = &ref.rho.back();
  p.phi_ref = ref.phi.empty() ? nullptr : &ref.phi.back();
  return p;
}

// One optimization stage over a recorded program.
void run_stage(loss::TrainingProgram& prog, const LrSchedule& sched,
               long epochs, double guard, TrainingLog& log,
               const RelErrProbe* probe, const nn::NetworkBundle* bundle,
               Method method, double eps, int rel_interval,
               bool track_sigma) {
  AdamOverBlocks adam;
  Vec grad;
  double last_rel = 0.0;
  using clock = std::chrono::steady_clock;
  for (long epoch = 0; epoch < epochs; ++epoch) {
    auto t0 = clock::now();
    loss::LossBreakdown lb = prog.eval_grad(grad);
    if (!std::isfinite(lb.total) || lb.total > guard)
      throw divergence_error(divergence_message(epoch, lb));
    double lr = lr_at(sched, epoch);
    adam.step(prog, grad, lr);

    TrainingLogRow row;
    row.epoch = epoch;
    row.lb = lb;
    row.lr = lr;
    row.sigma = track_sigma ? prog.sigma_value() : 0.0;
    if (probe && bundle &&
        (epoch % rel_interval == 0 || epoch == epochs - 1)) {
      last_rel = probe->rho_error(*bundle, method, eps);
    }
    row.rel_error = last_rel;
    row.wall_s =
        std::chrono::duration<double>(clock::now() - t0).count();
    log.rows.push_back(row);
  }
}

}  // namespace

ForwardResult train_forward(const TrainSpec& spec,
                            const problems::Setup& setup,
                            const classic::ReferenceRun& reference,
                            const classic::SpatialGrid& grid,
                            const spectral::HermiteBasis& basis) {
  const bool p2 = setup.problem == problems::Problem::kProblem2;
  ForwardResult out;
  out.bundle = make_bundle(spec, p2);
  nn::NetworkBundle& bundle = out.bundle;

  loss::CollocationSet colloc =
      loss::build_collocation(basis, spec.colloc_nt, spec.colloc_nx,
                              setup.t_final, setup.x_min, setup.x_max);
  loss::PhiSpec phi;
  if (p2)
    phi.net = &*bundle.phi;
  else
    phi.analytic = setup.potential;

  RelErrProbe probe = make_probe(reference, grid, setup.t_final);

  const bool bi = spec.method == Method::kBiExplicit ||
                  spec.method == Method::kBiImplicit;
  if (bi && spec.pretrain_epochs > 0) {
    loss::BuildOptions o;
    o.method = spec.method;
    o.eps = spec.eps;
    o.include_model = false;
    o.include_diffusion = true;
    o.diffusion_variant = spec.diffusion_variant;
    o.sigma_fixed = setup.sigma_true;
    if (p2) {
      o.include_poisson = true;
      o.poisson_beta = setup.beta;
      o.poisson_bias = setup.bias_v;
      o.doping = setup.doping;
    }
    loss::TrainingProgram pre(bundle, o, colloc, basis, spec.weights, phi,
                              nullptr);
    run_stage(pre, spec.pretrain_schedule, spec.pretrain_epochs,
              spec.divergence_guard, out.pretrain_log, nullptr, nullptr,
              spec.method, spec.eps, spec.rel_log_interval, false);
    bundle.rho_diff_frozen = true;
  }

  loss::BuildOptions o;
  o.method = spec.method;
  o.eps = spec.eps;
  o.include_model = true;
  o.sigma_fixed = setup.sigma_true;
  if (p2) {
    o.include_poisson = true;
    o.poisson_beta = setup.beta;
    o.poisson_bias = setup.bias_v;
    o.doping = setup.doping;
  }
  loss::TrainingProgram main(bundle, o, colloc, basis, spec.weights, phi,
                             nullptr);
  run_stage(main, spec.schedule, spec.epochs, spec.divergence_guard, out.log,
            &probe, &bundle, spec.method, spec.eps, spec.rel_log_interval,
            false);

  out.rel_error_rho = probe.rho_error(bundle, spec.method, spec.eps);
  if (p2 && probe.phi_ref) out.rel_error_phi = probe.phi_error(bundle);
  return out;
}

InverseResult train_inverse(const TrainSpec& spec,
                            const problems::Setup& setup,
                            const loss::ObservationSet& obs, double sigma0,
                            const classic::ReferenceRun* reference,
                            const classic::SpatialGrid& grid,
                            const spectral::HermiteBasis& basis) {
  require(sigma0 > 0.0, "train_inverse: sigma0 must be positive");
  const bool p2 = setup.problem == problems::Problem::kProblem2;

  InverseResult out;
  out.bundle = make_bundle(spec, p2);
  nn::NetworkBundle& bundle = out.bundle;
  bundle.sigma_raw = nn::softplus_inverse(sigma0);
  bundle.sigma_trainable = true;

  loss::CollocationSet colloc =
      loss::build_collocation(basis, spec.colloc_nt, spec.colloc_nx,
                              setup.t_final, setup.x_min, setup.x_max);
  loss::PhiSpec phi;
  if (p2)
    phi.net = &*bundle.phi;
  else
    phi.analytic = setup.potential;

  const bool bi = spec.method == Method::kBiExplicit ||
                  spec.method == Method::kBiImplicit;
  loss::BuildOptions o;
  o.method = spec.method;
  o.eps = spec.eps;
  o.include_model = true;
  o.sigma_trainable = true;
  o.include_diffusion = bi;  // jointly trained regularizer
  o.diffusion_variant = loss::DiffusionVariant::kV1;
  o.include_data_rho = true;
  o.include_data_phi = p2 && !obs.phi_values.empty();
  if (p2) {
    o.include_poisson = true;
    o.poisson_beta = setup.beta;
    o.poisson_bias = setup.bias_v;
    o.doping = setup.doping;
  }
  loss::TrainingProgram prog(bundle, o, colloc, basis, spec.weights, phi,
                             &obs);

  RelErrProbe probe;
  bool have_probe = reference != nullptr;
  if (have_probe) probe = make_probe(*reference, grid, setup.t_final);
  run_stage(prog, spec.schedule, spec.epochs, spec.divergence_guard, out.log,
            have_probe ? &probe : nullptr, have_probe ? &bundle : nullptr,
            spec.method, spec.eps, spec.rel_log_interval, true);

  out.sigma_hat = nn::softplus(bundle.sigma_raw);
  return out;
}

}  // namespace semibolt::train
