#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "optbpx/bpx.hpp"
#include "optbpx/discretize.hpp"
#include "optbpx/error.hpp"
#include "optbpx/optimize.hpp"
#include "optbpx/rng.hpp"

using namespace optbpx;
using namespace optbpx::optimize;

namespace {

bpx::BpxParams perturbed(int L, int dim, std::uint64_t seed, double amp) {
  auto p = bpx::classical_params(L, dim);
  auto flat = bpx::flatten(p, bpx::ParamSelection::Full);
  Philox g(seed, 7);
  for (auto& x : flat) x += amp * g.next_normal();
  bpx::unflatten(flat, p, bpx::ParamSelection::Full);
  return p;
}

SparseOperator identity(std::size_t n) {
  std::vector<SparseOperator::Triplet> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return SparseOperator::from_triplets(n, std::move(t), true);
}

// kappa(BAB) from an independent dense product.
double dense_kappa(const SparseOperator& a, const bpx::BpxParams& p) {
  const auto n = static_cast<Eigen::Index>(a.size());
  using RM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto bd = bpx::Preconditioner(p).dense();
  const auto ad = a.to_dense();
  const Eigen::MatrixXd b = Eigen::Map<const RM>(bd.data(), n, n);
  const Eigen::MatrixXd am = Eigen::Map<const RM>(ad.data(), n, n);
  const Eigen::MatrixXd c = b * am * b;
  const auto ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (c + c.transpose())).eigenvalues();
  return ev.maxCoeff() / ev.minCoeff();
}

spectral::EstimatorConfig est(int m, int k, int batch, std::uint64_t seed = 1) {
  return {m, k, batch, seed, kLossPurpose, 0};
}

}  // namespace

TEST_CASE("L1 at theta = 0 is rho_m(I)") {
  const auto a = discretize::poisson_1d(3);
  Problem pr;
  pr.a = &a;
  for (int m : {1, 2, 3}) {
    const auto g = loss_grad_L1(pr, bpx::classical_params(3, 1), 0.0, est(m, 10, 4));
    // rho_1 is not normalized by the probe: ||z||^2 = n for Rademacher z, so rho_1(I) = n^{1/2k}.
    const double expect = m == 1 ? std::pow(7.0, 1.0 / 20.0) : 1.0;
    CHECK(g.value == doctest::Approx(expect).epsilon(1e-14));
    CHECK(std::isfinite(g.dtheta));
    CHECK(g.dtheta < 0.0);
  }
}

TEST_CASE("L1 value matches the estimator bit for bit") {
  const auto a = discretize::assemble({discretize::EquationKind::Poisson2D, 3, {}});
  Problem pr;
  pr.a = &a;
  const auto p = perturbed(3, 2, 3, 0.1);
  for (int m : {1, 2, 3}) {
    const auto c = est(m, 10, 5, 8);
    const auto g = loss_grad_L1(pr, p, 0.2, c);
    CHECK(g.value == spectral::estimate(iteration_map(pr.make(p), a, 1.0, 0.2), c));
  }
}

TEST_CASE("L1 near the optimal Richardson parameter") {
  const auto a = discretize::poisson_1d(3);
  Problem pr;
  pr.a = &a;
  const auto p = bpx::classical_params(3, 1);
  const auto rep = verified_report(pr, p);
  const double theta = 2.0 / (rep.lambda_max + rep.lambda_min);
  const auto g = loss_grad_L1(pr, p, theta, est(3, 50, 32, 2), false);
  CHECK(std::abs(g.value - 0.611) <= 0.02);
}

TEST_CASE("finite-difference agreement") {
  const auto a1 = discretize::poisson_1d(3);
  const auto a2 = discretize::assemble({discretize::EquationKind::AnisotropicPoisson2D, 3, {{"eps", {100, 0}}}});
  Problem p1, p2;
  p1.a = &a1;
  p2.a = &a2;
  p2.variant = bpx::Variant::semicoarsen(2, bpx::Axis::Y);
  for (int i = 0; i < 3; ++i) {
    const auto params1 = perturbed(3, 1, 10 + i, 0.2);
    const auto params2 = perturbed(3, 2, 20 + i, 0.1);
    const auto c = est(1 + i, 10, 6, 30 + i);
    CHECK(fd_check(p1, params1, initial_theta(p1, params1, 1), c, LossKind::L1).max_rel_error <= 1e-5);
    CHECK(fd_check(p1, params1, 0.0, c, LossKind::L2).max_rel_error <= 1e-4);
    CHECK(fd_check(p2, params2, initial_theta(p2, params2, 1), c, LossKind::L1).max_rel_error <= 1e-5);
  }
  FdOptions subset;
  subset.coordinates = 5;
  subset.seed = 4;
  const auto r = fd_check(p1, perturbed(3, 1, 1, 0.2), 0.05, est(3, 10, 4), LossKind::L1,
                          bpx::ParamSelection::Full, subset);
  CHECK(r.checked == 5);
  CHECK(r.max_rel_error <= 1e-5);
  const auto scales = fd_check(p1, perturbed(3, 1, 2, 0.2), 0.05, est(3, 10, 4), LossKind::L1,
                               bpx::ParamSelection::ScalesOnly);
  CHECK(scales.checked == 3);  // alpha_1, alpha_2, theta
  CHECK(scales.max_rel_error <= 1e-5);
}

TEST_CASE("L2 with identity operator and identity preconditioner") {
  const auto a = identity(7);
  Problem pr;
  pr.a = &a;
  auto p = bpx::classical_params(3, 1);
  p.alpha[0] = p.alpha[1] = 0.0;
  const auto g = loss_grad_L2(pr, p, est(3, 10, 4));
  // theta = 1 / rho_1(I) = 7^{-1/20}, so the iteration matrix is (1 - theta) I.
  const double theta = std::pow(7.0, -1.0 / 20.0);
  CHECK(g.theta == doctest::Approx(theta).epsilon(1e-14));
  CHECK(g.value == doctest::Approx(1.0 - theta).epsilon(1e-12));
}

TEST_CASE("exact L2 identity") {
  const auto a = discretize::poisson_1d(3);
  Problem pr;
  pr.a = &a;
  CHECK(loss_L2_exact(pr, bpx::classical_params(3, 1)) == doctest::Approx(1.0 - 1.0 / 4.138).epsilon(1e-4));
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto p = perturbed(3, 1, s, 0.3);
    CHECK(std::abs(loss_L2_exact(pr, p) - (1.0 - 1.0 / dense_kappa(a, p))) <= 1e-10);
  }
}

TEST_CASE("verified report matches a dense product") {
  const auto a = discretize::assemble({discretize::EquationKind::Mehrstellen2D, 3, {}});
  Problem pr;
  pr.a = &a;
  const auto p = perturbed(3, 2, 5, 0.1);
  CHECK(verified_report(pr, p).kappa == doctest::Approx(dense_kappa(a, p)).epsilon(1e-10));
}

TEST_CASE("ADAM") {
  AdamConfig cfg;
  AdamState st(3);
  std::vector<double> x{1.0, -2.0, 0.5};
  const auto x0 = x;
  const std::vector<double> zero(3, 0.0);
  for (int i = 0; i < 5; ++i) adam_step(st, x, zero, 0.1, cfg);
  CHECK(x == x0);

  AdamState a(2), b(2);
  std::vector<double> xa{0.0, 0.0}, xb{0.0, 0.0};
  const std::vector<double> g{3.0, -0.25};
  const int t = 1000;
  const double lr = 1e-3;
  for (int i = 0; i < t; ++i) {
    adam_step(a, xa, g, lr, cfg);
    adam_step(b, xb, g, lr, cfg);
  }
  CHECK(xa == xb);
  // Constant gradients: mhat / sqrt(vhat) = sign(g) exactly up to eps.
  CHECK(xa[0] == doctest::Approx(-lr * t).epsilon(1e-6));
  CHECK(xa[1] == doctest::Approx(lr * t).epsilon(1e-6));
}

TEST_CASE("estimator config for reporting") {
  const auto c = report_estimator(9);
  CHECK(c.m == 3);
  CHECK(c.k == 50);
  CHECK(c.n_batch == 32);
  CHECK(c.purpose == kVerifyPurpose);
}

TEST_CASE("routing and validation") {
  const auto a = discretize::assemble(
      {discretize::EquationKind::ConvectionDiffusion2D, 3, {{"vx", {1, -1}}, {"vy", {-1, -1}}}});
  Problem pr;
  pr.a = &a;
  LossConfig cfg;
  cfg.loss = LossKind::L2;
  cfg.n_epochs = 2;
  CHECK_THROWS_AS(run(pr, bpx::classical_params(3, 2), cfg), NotSymmetric);
  CHECK_THROWS_AS(loss_grad_L2(pr, bpx::classical_params(3, 2), est(3, 10, 4)), NotSymmetric);
  LossConfig bad;
  bad.n_inner = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("short training runs") {
  const auto a = discretize::poisson_1d(3);
  Problem pr;
  pr.a = &a;
  LossConfig cfg;
  cfg.n_epochs = 60;
  cfg.estimator.seed = 1;
  const auto init = bpx::classical_params(3, 1);
  const double base = verified_report(pr, init).kappa;

  const auto r1 = train_l1(pr, init, cfg);
  CHECK_FALSE(r1.aborted);
  CHECK(r1.history.size() == 60);
  CHECK(r1.best_score <= base);
  CHECK(verified_report(pr, r1.params).kappa == doctest::Approx(r1.best_score).epsilon(1e-12));

  cfg.loss = LossKind::L2;
  const auto r2 = train_l2(pr, init, cfg);
  for (const auto& row : r2.history) CHECK(row.loss < 1.0);
  CHECK(r2.best_score <= base);

  // Identical seeds give identical runs.
  const auto again = train_l2(pr, init, cfg);
  CHECK(again.params.eta == r2.params.eta);
  CHECK(again.final_loss == r2.final_loss);
}

TEST_CASE("L2 training agrees with L1 using many inner steps") {
  const auto a = discretize::poisson_1d(3);
  Problem pr;
  pr.a = &a;
  LossConfig cfg;
  cfg.estimator.seed = 1;
  const auto init = bpx::classical_params(3, 1);
  cfg.loss = LossKind::L2;
  const double k2 = run(pr, init, cfg).best_score;
  cfg.loss = LossKind::L1;
  cfg.n_inner = 50;
  const double k1 = run(pr, init, cfg).best_score;
  CHECK(std::abs(k2 - k1) / k1 <= 0.10);
}
