#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "optbpx/bpx.hpp"
#include "optbpx/discretize.hpp"
#include "optbpx/error.hpp"
#include "optbpx/rng.hpp"
#include "optbpx/spectral.hpp"

using namespace optbpx;
using namespace optbpx::spectral;

namespace {

struct DenseOp {
  Eigen::MatrixXd m;
  LinearMap map() const {
    const auto* mp = &m;
    return {static_cast<std::size_t>(m.rows()), [mp](std::span<const double> x, std::span<double> y) {
              Eigen::Map<Eigen::VectorXd>(y.data(), mp->rows()) =
                  *mp * Eigen::Map<const Eigen::VectorXd>(x.data(), mp->cols());
            }};
  }
};

DenseOp random_spd(int n, std::uint64_t seed) {
  Philox g(seed, 0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g.next_normal();
  return {a.transpose() * a + 0.1 * Eigen::MatrixXd::Identity(n, n)};
}

double top_eig(const DenseOp& op) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(op.m).eigenvalues().maxCoeff();
}

EstimatorConfig cfg(int m, int k, int batch, std::uint64_t seed = 1) { return {m, k, batch, seed, 0, 0}; }

}  // namespace

TEST_CASE("rho1 on trivial maps") {
  CHECK(rho1(scaled_identity_map(1, 2.0), cfg(1, 7, 5)) == 2.0);
  DenseOp d{Eigen::Vector2d(1.0, 0.5).asDiagonal()};
  // Rademacher probes: ||D^20 z||^2 = 1 + 2^-40 for every probe; the result is not divided by ||z||.
  const double expect = std::pow(1.0 + std::ldexp(1.0, -40), 1.0 / 40.0);
  for (int batch : {1, 4, 9}) CHECK(std::abs(rho1(d.map(), cfg(1, 20, batch)) - expect) < 1e-9);
}

TEST_CASE("rho2 and rho3 on trivial maps") {
  for (double c : {0.25, 3.0}) {
    CHECK(rho2(scaled_identity_map(6, c), cfg(2, 9, 1)) == doctest::Approx(c).epsilon(1e-14));
    CHECK(rho3(scaled_identity_map(6, c), cfg(3, 9, 4)) == doctest::Approx(c).epsilon(1e-14));
  }
  CHECK(rho2(scaled_identity_map(4, 0.0), cfg(2, 5, 1)) == 0.0);
  CHECK(rho3(scaled_identity_map(4, 0.0), cfg(3, 5, 3)) == 0.0);
  const auto op = random_spd(8, 3);
  CHECK(rho3(op.map(), cfg(3, 15, 1, 9)) == rho2(op.map(), cfg(2, 15, 1, 9)));
}

TEST_CASE("estimators approach lambda_max") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto op = random_spd(10, 100 + s);
    const double top = top_eig(op);
    CHECK(std::abs(rho1(op.map(), cfg(1, 200, 10, s)) - top) / top < 0.01);
    CHECK(std::abs(rho3(op.map(), cfg(3, 200, 10, s)) - top) / top < 0.02);
  }
  // One normal probe: the error is random, so a single fixed instance is checked.
  const auto op = random_spd(10, 100);
  CHECK(std::abs(rho2(op.map(), cfg(2, 200, 1, 0)) - top_eig(op)) / top_eig(op) < 0.02);
}

TEST_CASE("power trace survives overflow") {
  std::vector<double> z{1.0, -2.0, 2.0};
  const auto t = power_trace(scaled_identity_map(3, 1e200), z, 50, false);
  CHECK(std::isfinite(t.log_norm));
  CHECK(t.log_norm == doctest::Approx(50 * std::log(1e200) + std::log(3.0)).epsilon(1e-12));
  const auto small = power_trace(scaled_identity_map(3, 1e-200), z, 50, true);
  CHECK(small.iterates.size() == 51);
  CHECK(small.log_norm == doctest::Approx(50 * std::log(1e-200) + std::log(3.0)).epsilon(1e-12));
  CHECK(rho3(scaled_identity_map(3, 1e200), cfg(3, 50, 2)) == doctest::Approx(1e200).epsilon(1e-12));
}

TEST_CASE("estimators are deterministic") {
  const auto op = random_spd(12, 4);
  for (int m : {1, 2, 3}) {
    const auto c = cfg(m, 10, 6, 42);
    CHECK(estimate(op.map(), c) == estimate(op.map(), c));
  }
  CHECK(rho3(op.map(), cfg(3, 10, 6, 42)) != rho3(op.map(), cfg(3, 10, 6, 43)));
  CHECK_THROWS(cfg(4, 10, 6).validate());
  CHECK_THROWS(cfg(1, 0, 6).validate());
}

TEST_CASE("exact extreme eigenvalues") {
  const auto a = discretize::poisson_1d(3);
  const auto e = exact_extreme_eigs(as_map(a));
  CHECK(e.lambda_min == doctest::Approx(16.0 * (1.0 - std::cos(std::numbers::pi / 8))).epsilon(1e-12));
  CHECK(e.lambda_max == doctest::Approx(16.0 * (1.0 - std::cos(7 * std::numbers::pi / 8))).epsilon(1e-12));
  const auto id = exact_extreme_eigs(identity_map(5));
  CHECK(id.lambda_min == doctest::Approx(1.0));
  CHECK(id.lambda_max == doctest::Approx(1.0));

  const auto p2 = discretize::assemble({discretize::EquationKind::Poisson2D, 3, {}});
  const bpx::Preconditioner b(bpx::classical_params(3, 2));
  const auto bab = bpx::symmetric_map(b, p2);
  const auto dense = exact_extreme_eigs(bab);
  CHECK(dense.dense);
  CHECK(dense.lambda_max / dense.lambda_min == doctest::Approx(4.277).epsilon(0.005));
  const auto lanczos = exact_extreme_eigs(bab, 0);
  CHECK_FALSE(lanczos.dense);
  CHECK(lanczos.lambda_min == doctest::Approx(dense.lambda_min).epsilon(1e-8));
  CHECK(lanczos.lambda_max == doctest::Approx(dense.lambda_max).epsilon(1e-8));
}

TEST_CASE("optimal Richardson radius from rho3") {
  const auto a = discretize::poisson_1d(3);
  const bpx::Preconditioner b(bpx::classical_params(3, 1));
  const auto bab = bpx::symmetric_map(b, a);
  const auto e = exact_extreme_eigs(bab);
  const double theta = 2.0 / (e.lambda_max + e.lambda_min);
  const LinearMap m{bab.size, [&](std::span<const double> x, std::span<double> y) {
                      bab.apply(x, y);
                      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - theta * y[i];
                    }};
  CHECK(std::abs(rho3(m, cfg(3, 50, 32, 5)) - 0.611) <= 0.02);
}

TEST_CASE("report") {
  const auto r = report(1.0, 4.277);
  CHECK(r.rho == doctest::Approx(0.621).epsilon(1e-3));
  CHECK(r.iterations == 5);
  const auto one = report(2.0, 2.0);
  CHECK(one.rho == 0.0);
  CHECK(one.iterations == 0);
  const auto p = report(1.0, 4.138);
  CHECK(p.rho == doctest::Approx(0.611).epsilon(1e-3));
  CHECK(p.iterations == 5);
  CHECK_THROWS_AS(report(0.0, 1.0), IndefiniteOperator);
  CHECK_THROWS_AS(report(-1.0, 1.0), IndefiniteOperator);
  CHECK(iterations_for(0.1) == 1);
  CHECK(iterations_for(0.974) == 88);
  CHECK(report_csv_row("Poisson1D", 3, "plain", report(1.0, 4.0)).rfind("Poisson1D,3,plain,", 0) == 0);
}
