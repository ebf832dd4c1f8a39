#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "semibolt/losses.hpp"
#include "semibolt/problems.hpp"
#include "support/naive_ref.hpp"

using namespace semibolt;
using loss::BuildOptions;
using loss::CollocationSet;
using loss::DiffusionVariant;
using loss::LossBreakdown;
using loss::PenaltyWeights;
using loss::PhiSpec;
using nn::Method;
using nn::OutputTransform;

namespace {

void randomize(nn::DenseNet& net, uint64_t seed, double scale = 0.4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& t : net.theta) t = dist(rng);
}

nn::NetworkBundle tiny_bundle(Method m, uint64_t seed, bool with_phi = false) {
  nn::NetworkBundle b;
  if (m == Method::kPinn || m == Method::kApnn) {
    b.rho_apnn = nn::xavier_init({2, 8, 8, 1}, seed + 1,
                                 OutputTransform::kNegatedExponential);
    randomize(*b.rho_apnn, seed + 11);
  } else {
    b.rho_diff = nn::xavier_init({2, 8, 8, 1}, seed + 2,
                                 OutputTransform::kNegatedExponential);
    b.rho_corr = nn::xavier_init({2, 8, 8, 1}, seed + 3);
    randomize(*b.rho_diff, seed + 12);
    randomize(*b.rho_corr, seed + 13);
  }
  b.g = nn::xavier_init({3, 8, 8, 1}, seed + 4);
  randomize(*b.g, seed + 14);
  if (with_phi) {
    b.phi = nn::xavier_init({2, 8, 8, 1}, seed + 5);
    randomize(*b.phi, seed + 15);
  }
  return b;
}

PhiSpec analytic_phi() {
  PhiSpec p;
  problems::Setup s = problems::problem1();
  p.analytic = s.potential;
  return p;
}

naive::PhiFn naive_phi() {
  problems::Setup s = problems::problem1();
  return [pot = s.potential](double t, double x) {
    return naive::PhiAt{pot.dphi(t, x), pot.d2phi(t, x), pot.phi(t, x)};
  };
}

// all-zero bundle evaluating to the global equilibrium f = M
nn::NetworkBundle equilibrium_bundle(Method m) {
  nn::NetworkBundle b = tiny_bundle(m, 100);
  auto zero = [](std::optional<nn::DenseNet>& n) {
    if (n) std::fill(n->theta.begin(), n->theta.end(), 0.0);
  };
  zero(b.rho_apnn);
  zero(b.rho_diff);
  zero(b.rho_corr);
  zero(b.g);
  if (b.rho_corr) {
  }  // corr = 0 keeps rho = rho_diff = 1
  return b;
}

}  // namespace

TEST_CASE("collocation counts match the published grid design") {
  spectral::HermiteBasis basis = spectral::build_basis(7, 8);
  CollocationSet c = loss::build_collocation(basis);
  CHECK(c.n1() == 1980);
  CHECK(c.n2() == 15840);
  CHECK(c.n3() == 160);
  CHECK(c.n4() == 792);
  // interior excludes the boundary and t = 0
  for (int p = 0; p < c.n1(); ++p) {
    CHECK(c.interior_tx(0, p) > 0.0);
    CHECK(c.interior_tx(1, p) > 0.0);
    CHECK(c.interior_tx(1, p) < 1.0);
  }
  // inflow split: half the nodes on each side
  int pos = 0;
  for (double v : basis.nodes) pos += v > 0 ? 1 : 0;
  CHECK(pos == 4);
}

TEST_CASE("equilibrium annihilates every interior residual") {
  spectral::HermiteBasis basis = spectral::build_basis(7, 8);
  CollocationSet c = loss::build_collocation(basis, 4, 7);
  PenaltyWeights w;
  PhiSpec flat;  // constant potential
  flat.analytic.phi = [](double, double) { return 0.7; };
  flat.analytic.dphi = [](double, double) { return 0.0; };
  flat.analytic.d2phi = [](double, double) { return 0.0; };

  for (Method m : {Method::kApnn, Method::kBiImplicit}) {
    nn::NetworkBundle b = equilibrium_bundle(m);
    if (m == Method::kBiImplicit) {
      // bi split of rho = 1: diff net gives exp(0) = 1, corr gives 0
    }
    LossBreakdown lb =
        m == Method::kApnn
            ? loss::apnn_loss(b, 1e-3, 2.0, flat, c, basis, w)
            : loss::biapnn_loss(b, Method::kBiImplicit, 1e-3, 2.0, flat, c,
                                basis, w);
    CHECK(std::abs(lb.macro) < 1e-14);
    CHECK(std::abs(lb.micro) < 1e-14);
    CHECK(std::abs(lb.bc) < 1e-14);
    CHECK(std::abs(lb.ic) < 1e-14);
    CHECK(lb.total == doctest::Approx(0.0).scale(1.0).epsilon(1e-13));
  }

  nn::NetworkBundle bp = equilibrium_bundle(Method::kPinn);
  LossBreakdown lp = loss::pinn_loss(bp, 1.0, 2.0, flat, c, basis, w);
  CHECK(std::abs(lp.micro) < 1e-12);
  LossBreakdown lp2 = loss::pinn_loss(bp, 1e-8, 2.0, flat, c, basis, w);
  CHECK(std::abs(lp2.micro) < 1e-12);

  nn::NetworkBundle bd = equilibrium_bundle(Method::kBiImplicit);
  LossBreakdown ld = loss::diffusion_loss(bd, DiffusionVariant::kV1, 2.0,
                                          flat, c, basis, w);
  CHECK(std::abs(ld.diffusion) < 1e-14);
  LossBreakdown ld2 = loss::diffusion_loss(bd, DiffusionVariant::kV2, 2.0,
                                           flat, c, basis, w);
  CHECK(std::abs(ld2.diffusion) < 1e-14);
}

TEST_CASE("pinn loss rejects the vanishing-eps limit") {
  spectral::HermiteBasis basis = spectral::build_basis(3, 4);
  CollocationSet c = loss::build_collocation(basis, 3, 3);
  PenaltyWeights w;
  nn::NetworkBundle b = tiny_bundle(Method::kPinn, 7);
  CHECK_THROWS_AS(loss::pinn_loss(b, 0.0, 2.0, analytic_phi(), c, basis, w),
                  std::invalid_argument);
}

TEST_CASE("dual-implementation oracle on miniature configurations") {
  spectral::HermiteBasis basis = spectral::build_basis(3, 4);
  CollocationSet c = loss::build_collocation(basis, 3, 3);
  PenaltyWeights w;
  w.lambda1 = 0.8;
  w.lambda2 = 1.3;
  PhiSpec phi = analytic_phi();
  naive::PhiFn nphi = naive_phi();
  const double sigma = 2.0;

  for (double eps : {1.0, 1e-2, 1e-8}) {
    CAPTURE(eps);
    {
      nn::NetworkBundle b = tiny_bundle(Method::kApnn, 50);
      LossBreakdown lb = loss::apnn_loss(b, eps, sigma, phi, c, basis, w);
      auto [mac, mic] =
          naive::interior_mm(b, Method::kApnn, eps, sigma, nphi, c, basis);
      auto [bc, ic] = naive::bc_ic(b, Method::kApnn, eps, c, basis, w.lambda1,
                                   w.lambda2);
      CHECK(lb.macro == doctest::Approx(mac).epsilon(1e-12));
      CHECK(lb.micro == doctest::Approx(mic).epsilon(1e-12));
      CHECK(lb.bc == doctest::Approx(bc).epsilon(1e-12));
      CHECK(lb.ic == doctest::Approx(ic).epsilon(1e-12));
      CHECK(lb.total == doctest::Approx(mac + mic + bc + ic).epsilon(1e-12));
    }
    for (Method m : {Method::kBiExplicit, Method::kBiImplicit}) {
      nn::NetworkBundle b = tiny_bundle(m, 60);
      LossBreakdown lb = loss::biapnn_loss(b, m, eps, sigma, phi, c, basis, w);
      auto [mac, mic] = naive::interior_mm(b, m, eps, sigma, nphi, c, basis);
      auto [bc, ic] =
          naive::bc_ic(b, m, eps, c, basis, w.lambda1, w.lambda2);
      CHECK(lb.macro == doctest::Approx(mac).epsilon(1e-12));
      CHECK(lb.micro == doctest::Approx(mic).epsilon(1e-12));
      CHECK(lb.bc == doctest::Approx(bc).epsilon(1e-12));
      CHECK(lb.ic == doctest::Approx(ic).epsilon(1e-12));
    }
    {
      nn::NetworkBundle b = tiny_bundle(Method::kPinn, 70);
      LossBreakdown lb = loss::pinn_loss(b, eps, sigma, phi, c, basis, w);
      double mic = naive::interior_pinn(b, eps, sigma, nphi, c, basis);
      CHECK(lb.micro == doctest::Approx(mic).epsilon(1e-12));
    }
  }

  // diffusion pre-training losses
  {
    nn::NetworkBundle b = tiny_bundle(Method::kBiImplicit, 80);
    LossBreakdown v1 = loss::diffusion_loss(b, DiffusionVariant::kV1, sigma,
                                            phi, c, basis, w);
    double t_coef = 0.0;
    for (int j = 0; j < basis.num_nodes; ++j)
      t_coef += basis.nodes[j] * basis.nodes[j] *
                basis.weights_maxwellian[j];
    t_coef /= sigma;
    double interior = 0.0;
    for (int p = 0; p < c.n1(); ++p) {
      double t = c.interior_tx(0, p), x = c.interior_tx(1, p);
      naive::Quad rd = naive::eval_mlp(*b.rho_diff, {t, x});
      naive::PhiAt ph = nphi(t, x);
      double r = rd.dt - t_coef * rd.dxx +
                 2.0 * t_coef * (rd.dx * ph.dx + rd.v * ph.dxx);
      interior += r * r;
    }
    interior /= c.n1();
    auto [bcd, icd] = naive::bc_ic(b, Method::kBiImplicit, 0.0, c, basis,
                                   w.lambda1_diff, w.lambda2_diff, true);
    CHECK(v1.diffusion ==
          doctest::Approx(interior + bcd + icd).epsilon(1e-12));
  }
}

TEST_CASE("vanishing eps reproduces the limiting-system residuals") {
  // the interior terms at eps = 0 equal the limit-system residuals,
  // term by term on random networks
  spectral::HermiteBasis basis = spectral::build_basis(7, 8);
  CollocationSet c = loss::build_collocation(basis, 3, 5);
  PenaltyWeights w;
  PhiSpec phi = analytic_phi();
  naive::PhiFn nphi = naive_phi();

  for (Method m : {Method::kApnn, Method::kBiExplicit, Method::kBiImplicit}) {
    nn::NetworkBundle b = tiny_bundle(m, 90 + static_cast<int>(m));
    BuildOptions o;
    o.method = m;
    o.eps = 0.0;
    o.sigma_fixed = 2.0;
    loss::TrainingProgram prog(b, o, c, basis, w, phi, nullptr);
    prog.eval();
    Vec mac = prog.macro_residuals();
    Vec mic = prog.micro_residuals();

    // independent limit-system residuals
    int nv = basis.num_nodes;
    int idx = 0;
    for (int p = 0; p < c.n1(); ++p) {
      double t = c.interior_tx(0, p), x = c.interior_tx(1, p);
      naive::Quad rho = naive::eval_rho(b, m, 0.0, t, x);
      naive::GPoint g = naive::eval_g(b, basis, t, x);
      naive::PhiAt ph = nphi(t, x);
      Vec q = naive::qtilde(g.psi, 2.0, basis);
      double vgx = 0, dvm = 0;
      for (int j = 0; j < nv; ++j) {
        vgx += basis.nodes[j] * g.dx[j] * basis.weights_maxwellian[j];
        dvm += g.dvg[j] * basis.weights_maxwellian[j];
      }
      double rmac = rho.dt + vgx + ph.dx * dvm;
      CHECK(std::abs(mac[p] - rmac) < 1e-13);
      for (int j = 0; j < nv; ++j) {
        double vj = basis.nodes[j];
        double r = (vj * rho.dx - 2.0 * vj * rho.v * ph.dx - q[j]) *
                   basis.maxwellian_at_nodes[j];
        // micro residuals live on the velocity-major kinetic batch
        double got = mic[j * c.n1() + p];
        CHECK(std::abs(got - r) < 1e-13);
        ++idx;
      }
    }
  }
}

TEST_CASE("bi-fidelity degeneracies") {
  spectral::HermiteBasis basis = spectral::build_basis(3, 4);
  CollocationSet c = loss::build_collocation(basis, 3, 3);
  PenaltyWeights w;
  PhiSpec phi = analytic_phi();

  // zero correction net: the bi loss equals the single-density loss
  nn::NetworkBundle b = tiny_bundle(Method::kBiImplicit, 110);
  std::fill(b.rho_corr->theta.begin(), b.rho_corr->theta.end(), 0.0);
  nn::NetworkBundle ap;
  ap.rho_apnn = b.rho_diff;  // same weights seen as the single net
  ap.g = b.g;
  LossBreakdown bi =
      loss::biapnn_loss(b, Method::kBiImplicit, 0.5, 2.0, phi, c, basis, w);
  LossBreakdown single = loss::apnn_loss(ap, 0.5, 2.0, phi, c, basis, w);
  CHECK(bi.macro == doctest::Approx(single.macro).epsilon(1e-14));
  CHECK(bi.micro == doctest::Approx(single.micro).epsilon(1e-14));
  CHECK(bi.bc == doctest::Approx(single.bc).epsilon(1e-14));
  CHECK(bi.ic == doctest::Approx(single.ic).epsilon(1e-14));

  // explicit mode at eps = 0: the correction cannot influence anything
  nn::NetworkBundle be = tiny_bundle(Method::kBiExplicit, 120);
  BuildOptions o;
  o.method = Method::kBiExplicit;
  o.eps = 0.0;
  o.sigma_fixed = 2.0;
  loss::TrainingProgram prog(be, o, c, basis, w, phi, nullptr);
  Vec grad;
  prog.eval_grad(grad);
  size_t off = 0;
  bool found = false;
  for (const auto& blk : prog.trainable_blocks()) {
    if (blk.name == "rho_corr") {
      found = true;
      for (size_t i = 0; i < blk.count; ++i) CHECK(grad[off + i] == 0.0);
    }
    off += blk.count;
  }
  CHECK(found);
}

TEST_CASE("data loss: exact match, single point, direct sum") {
  nn::NetworkBundle b = tiny_bundle(Method::kBiImplicit, 130);
  PenaltyWeights w;
  w.w_data_rho = 1.7;

  loss::ObservationSet obs;
  obs.rho_points = RowMatrix(2, 7);
  obs.rho_values.resize(7);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> dist(0, 1);
  for (int k = 0; k < 7; ++k) {
    obs.rho_points(0, k) = 0.1 * dist(rng);
    obs.rho_points(1, k) = dist(rng);
  }
  // exact predictions -> zero
  auto rv = nn::rho_from_bundle(b, Method::kBiImplicit, 0.5, obs.rho_points);
  obs.rho_values = rv.value;
  auto [dr0, dp0] = loss::data_loss(b, Method::kBiImplicit, 0.5, obs, w);
  CHECK(dr0 == 0.0);
  CHECK(dp0 == 0.0);

  // single observation off by delta
  loss::ObservationSet one;
  one.rho_points = RowMatrix(2, 1);
  one.rho_points(0, 0) = 0.05;
  one.rho_points(1, 0) = 0.5;
  auto rv1 = nn::rho_from_bundle(b, Method::kBiImplicit, 0.5, one.rho_points);
  double delta = 0.37;
  one.rho_values = {rv1.value[0] - delta};
  auto [dr1, dp1] = loss::data_loss(b, Method::kBiImplicit, 0.5, one, w);
  CHECK(dr1 == doctest::Approx(1.7 * delta * delta).epsilon(1e-14));
  CHECK(dp1 == 0.0);

  // direct-sum oracle on a random set
  for (int k = 0; k < 7; ++k) obs.rho_values[k] += 0.1 * dist(rng);
  auto [dr, dp] = loss::data_loss(b, Method::kBiImplicit, 0.5, obs, w);
  double hand = 0.0;
  for (int k = 0; k < 7; ++k) {
    double d = rv.value[k] - obs.rho_values[k];
    hand += d * d;
  }
  hand *= 1.7 / 7.0;
  CHECK(dr == doctest::Approx(hand).epsilon(1e-14));

  loss::ObservationSet empty;
  CHECK_THROWS_AS(loss::data_loss(b, Method::kBiImplicit, 0.5, empty, w),
                  std::invalid_argument);
}

TEST_CASE("poisson penalty: manufactured and affine potentials") {
  spectral::HermiteBasis basis = spectral::build_basis(3, 4);
  CollocationSet c = loss::build_collocation(basis, 4, 6);
  PenaltyWeights w;
  const double beta = 0.002, vb = 5.0;

  // affine phi net matching the bias and rho = c: exact solution
  nn::NetworkBundle b = tiny_bundle(Method::kApnn, 140);
  std::fill(b.rho_apnn->theta.begin(), b.rho_apnn->theta.end(), 0.0);
  b.phi = nn::DenseNet{};
  b.phi->widths = {2, 1};
  b.phi->transform = OutputTransform::kIdentity;
  b.phi->theta = {0.0, vb, 0.0};  // phi(t, x) = V x
  double p0 = loss::poisson_residual_loss(
      b, Method::kApnn, 1.0, beta, vb, [](double) { return 1.0; }, c, basis,
      w);
  CHECK(std::abs(p0) < 1e-12);

  // zero phi net: right-boundary penalty is V^2 on average
  std::fill(b.phi->theta.begin(), b.phi->theta.end(), 0.0);
  double pz = loss::poisson_residual_loss(
      b, Method::kApnn, 1.0, beta, vb, [](double) { return 1.0; }, c, basis,
      w);
  // interior: |beta*0 - (1 - 1)|^2 = 0, left boundary 0, right = V^2
  CHECK(pz == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("total inverse loss is the sum of its parts") {
  spectral::HermiteBasis basis = spectral::build_basis(3, 4);
  CollocationSet c = loss::build_collocation(basis, 3, 3);
  PenaltyWeights w;
  PhiSpec phi = analytic_phi();

  nn::NetworkBundle b = tiny_bundle(Method::kBiImplicit, 150);
  b.sigma_raw = nn::softplus_inverse(1.5);
  b.sigma_trainable = true;

  loss::ObservationSet obs;
  obs.rho_points = RowMatrix(2, 5);
  obs.rho_values.assign(5, 1.0);
  for (int k = 0; k < 5; ++k) {
    obs.rho_points(0, k) = 0.02 * (k + 1);
    obs.rho_points(1, k) = 0.15 * (k + 1);
  }

  LossBreakdown lb = loss::total_inverse_loss(b, Method::kBiImplicit, 1e-3,
                                              phi, c, basis, w, obs);
  double sum = lb.macro + lb.micro + lb.bc + lb.ic + lb.diffusion +
               lb.data_rho + lb.data_phi + lb.poisson;
  CHECK(lb.total == doctest::Approx(sum).epsilon(1e-12));
  CHECK(lb.diffusion > 0.0);
  CHECK(lb.data_rho > 0.0);

  // the plain micro-macro mode regularizes with data only
  nn::NetworkBundle ba = tiny_bundle(Method::kApnn, 160);
  ba.sigma_raw = nn::softplus_inverse(1.5);
  LossBreakdown la = loss::total_inverse_loss(ba, Method::kApnn, 1e-3, phi, c,
                                              basis, w, obs);
  CHECK(la.diffusion == 0.0);
  CHECK(la.data_rho > 0.0);
}

TEST_CASE("permuting collocation points leaves losses invariant") {
  spectral::HermiteBasis basis = spectral::build_basis(3, 4);
  CollocationSet c = loss::build_collocation(basis, 4, 5);
  PenaltyWeights w;
  PhiSpec phi = analytic_phi();
  nn::NetworkBundle b = tiny_bundle(Method::kApnn, 170);

  LossBreakdown before = loss::apnn_loss(b, 0.3, 2.0, phi, c, basis, w);

  CollocationSet cp = c;
  std::mt19937_64 rng(5);
  for (int p = c.n1() - 1; p > 0; --p) {
    int q = static_cast<int>(rng() % (p + 1));
    std::swap(cp.interior_tx(0, p), cp.interior_tx(0, q));
    std::swap(cp.interior_tx(1, p), cp.interior_tx(1, q));
  }
  LossBreakdown after = loss::apnn_loss(b, 0.3, 2.0, phi, cp, basis, w);
  CHECK(after.macro == doctest::Approx(before.macro).epsilon(1e-12));
  CHECK(after.micro == doctest::Approx(before.micro).epsilon(1e-12));
  CHECK(after.total == doctest::Approx(before.total).epsilon(1e-12));
}

TEST_CASE("observation synthesis is deterministic and in-domain") {
  spectral::HermiteBasis basis = spectral::build_basis(7, 8);
  classic::SpatialGrid grid = classic::make_grid(0.0, 1.0, 101);
  problems::Setup p1 = problems::problem1();
  classic::ReferenceProblem rp = problems::reference_problem(p1, grid, basis);
  classic::ReferenceRun run =
      classic::run_reference(rp, 1e-8, grid, 0.005, 0.1, basis);

  loss::ObservationSet a = loss::make_observations(run, grid, 100, 0, 99);
  loss::ObservationSet b2 = loss::make_observations(run, grid, 100, 0, 99);
  CHECK(a.rho_values == b2.rho_values);
  CHECK(a.rho_points.data == b2.rho_points.data);
  for (int k = 0; k < 100; ++k) {
    CHECK(a.rho_points(0, k) >= 0.0);
    CHECK(a.rho_points(0, k) <= 0.1 + 1e-12);
    CHECK(a.rho_points(1, k) >= 0.0);
    CHECK(a.rho_points(1, k) <= 1.0);
  }
  loss::ObservationSet c3 = loss::make_observations(run, grid, 100, 0, 7);
  CHECK(a.rho_values != c3.rho_values);
}
