#include <doctest.h>

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <numbers>

#include "optbpx/discretize.hpp"
#include "optbpx/error.hpp"

using namespace optbpx;
using namespace optbpx::discretize;

namespace {

Eigen::MatrixXd dense(const SparseOperator& a) {
  const auto n = static_cast<Eigen::Index>(a.size());
  const auto d = a.to_dense();
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(d.data(), n, n);
}

EquationSpec spec(EquationKind k, int L, std::map<std::string, ParamValue> p = {}) {
  return {k, L, std::move(p)};
}

// Element stiffness of -div(a grad u) for bilinear elements on [0,h]^2, integrated with
// 2x2 Gauss points. Local nodes: (0,0), (h,0), (0,h), (h,h).
std::array<std::array<double, 4>, 4> gauss_stiffness(double h, double a) {
  std::array<std::array<double, 4>, 4> k{};
  const double g = 0.5 / std::sqrt(3.0);
  for (double px : {0.5 - g, 0.5 + g}) {
    for (double py : {0.5 - g, 0.5 + g}) {
      // Reference gradients scaled by 1/h; weight h^2/4.
      const std::array<std::array<double, 2>, 4> grad{{{-(1 - py), -(1 - px)},
                                                       {(1 - py), -px},
                                                       {-py, (1 - px)},
                                                       {py, px}}};
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          k[i][j] += 0.25 * a * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
    }
  }
  (void)h;  // h cancels: (1/h^2) * h^2
  return k;
}

}  // namespace

TEST_CASE("Poisson1D L=2 tridiagonal") {
  const auto a = assemble(spec(EquationKind::Poisson1D, 2));
  REQUIRE(a.size() == 3);
  CHECK(a.symmetric());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.at(i, i) == 8.0);
    if (i + 1 < 3) {
      CHECK(a.at(i, i + 1) == -4.0);
      CHECK(a.at(i + 1, i) == -4.0);
    }
  }
  CHECK(a.at(0, 2) == 0.0);
}

TEST_CASE("Poisson1D L=3 analytic spectrum") {
  const auto a = assemble(spec(EquationKind::Poisson1D, 3));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(a));
  const double h = 1.0 / 8.0;
  for (int j = 1; j <= 7; ++j) {
    const double expect = (2.0 / h) * (1.0 - std::cos(j * std::numbers::pi * h));
    CHECK(es.eigenvalues()(j - 1) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("Mehrstellen interior row") {
  const auto a = assemble(spec(EquationKind::Mehrstellen2D, 3));
  const std::size_t n = 7, c = 3 * n + 3;
  const double scale = a.at(c, c) / 20.0;
  CHECK(scale > 0.0);
  const int stencil[3][3] = {{-1, -4, -1}, {-4, 20, -4}, {-1, -4, -1}};
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      CHECK(a.at(c, c + dy * n + dx) == doctest::Approx(scale * stencil[dy + 1][dx + 1]));
  double row = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) row += a.at(c, j);
  CHECK(std::abs(row) < 1e-12);
  // Corner row keeps only 3 neighbors.
  int nnz = 0;
  for (std::size_t j = 0; j < a.size(); ++j) nnz += a.at(0, j) != 0.0;
  CHECK(nnz == 4);
  CHECK(spd_check(a).is_spd);
}

TEST_CASE("Biharmonic rows") {
  const auto a = assemble(spec(EquationKind::Biharmonic2D, 4));
  const long n = 15;
  const auto at = [&](long ix, long iy, long jx, long jy) {
    return a.at(static_cast<std::size_t>(iy * n + ix), static_cast<std::size_t>(jy * n + jx));
  };
  // Deep interior: 20 center, -8 edge neighbors, 2 diagonals, 1 at distance two.
  CHECK(at(7, 7, 7, 7) == 20.0);
  CHECK(at(7, 7, 8, 7) == -8.0);
  CHECK(at(7, 7, 6, 8) == 2.0);
  CHECK(at(7, 7, 7, 9) == 1.0);
  CHECK(at(7, 7, 9, 9) == 0.0);
  // Next to one wall the mirrored ghost adds 1 to the diagonal; in a corner, 2.
  CHECK(at(0, 7, 0, 7) == 21.0);
  CHECK(at(0, 0, 0, 0) == 22.0);
  CHECK(a.symmetric());
}

TEST_CASE("anisotropic eps=1 equals Poisson2D") {
  const auto a = assemble(spec(EquationKind::AnisotropicPoisson2D, 3, {{"eps", {1.0, 0}}}));
  const auto p = assemble(spec(EquationKind::Poisson2D, 3));
  CHECK((dense(a) - dense(p)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("discontinuous coefficients against element quadrature") {
  const double sigma = 10.0;
  const int L = 2;
  const auto a = assemble(spec(EquationKind::DiscontinuousDiffusion2D, L, {{"sigma", {sigma, 0}}}));
  const int cells = 4, n = 3;
  const double h = 0.25;
  Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(n * n, n * n);
  for (int ey = 0; ey < cells; ++ey) {
    for (int ex = 0; ex < cells; ++ex) {
      const double x = (ex + 0.5) * h, y = (ey + 0.5) * h;
      const double coef = (x < 0.5 ? 1 / sigma : sigma) + (y < 0.5 ? 1 / sigma : sigma);
      const auto k = gauss_stiffness(h, coef);
      const int nx[4] = {ex, ex + 1, ex, ex + 1}, ny[4] = {ey, ey, ey + 1, ey + 1};
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          const bool in_i = nx[i] >= 1 && nx[i] <= n && ny[i] >= 1 && ny[i] <= n;
          const bool in_j = nx[j] >= 1 && nx[j] <= n && ny[j] >= 1 && ny[j] <= n;
          if (in_i && in_j) oracle((ny[i] - 1) * n + nx[i] - 1, (ny[j] - 1) * n + nx[j] - 1) += k[i][j];
        }
      }
    }
  }
  CHECK((dense(a) - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mixed derivative guards the hyperbolic regime") {
  CHECK_THROWS_AS(assemble(spec(EquationKind::MixedDerivative2D, 3, {{"tau", {1.0, 0}}})), HyperbolicRegime);
  const auto a = assemble(spec(EquationKind::MixedDerivative2D, 3, {{"tau", {0.9, 0}}}));
  CHECK(spd_check(a).is_spd);
}

TEST_CASE("Crank-Nicolson") {
  const auto id = assemble(spec(EquationKind::CrankNicolson2D, 3, {{"mu", {0.0, 0}}}));
  CHECK((dense(id) - Eigen::MatrixXd::Identity(49, 49)).cwiseAbs().maxCoeff() == 0.0);
  const auto k = dense(assemble(spec(EquationKind::Poisson2D, 3)));
  const auto cn = dense(assemble(spec(EquationKind::CrankNicolson2D, 3, {{"mu", {0.5, 1}}})));
  const auto cond = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  };
  CHECK(cond(cn) < cond(k));
  const auto big = dense(assemble(spec(EquationKind::CrankNicolson2D, 3, {{"mu", {2.0, -1}}})));
  CHECK((big - Eigen::MatrixXd::Identity(49, 49) - 8.0 * k).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("convection is nonsymmetric with a symmetric part equal to Poisson") {
  const auto a = assemble(spec(EquationKind::ConvectionDiffusion2D, 3, {{"vx", {1, -1}}, {"vy", {-1, -1}}}));
  CHECK_FALSE(a.symmetric());
  CHECK(a.asymmetry() > 0.0);
  const auto d = dense(a);
  const auto p = dense(assemble(spec(EquationKind::Poisson2D, 3)));
  CHECK((0.5 * (d + d.transpose()) - p).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(spd_check(a), NotSymmetric);
}

TEST_CASE("spd_check") {
  const auto id = SparseOperator::from_triplets(3, {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}}, true);
  const auto r = spd_check(id);
  CHECK(r.is_spd);
  CHECK(r.lambda_min == doctest::Approx(1.0));
  const auto p = spd_check(assemble(spec(EquationKind::Poisson1D, 3)));
  CHECK(p.lambda_min == doctest::Approx(16.0 * (1.0 - std::cos(std::numbers::pi / 8.0))).epsilon(1e-12));
  const auto shifted = fem_2d(3, [](double, double) { return std::pair{1.0, 1.0}; }, -1000.0);
  const auto s = spd_check(shifted);
  CHECK_FALSE(s.is_spd);
  CHECK(s.lambda_min < 0.0);
  CHECK_THROWS_AS(assemble(spec(EquationKind::Helmholtz2D, 5, {{"k2h", {10.0, 0}}})), IndefiniteOperator);
}

TEST_CASE("equation parameter validation") {
  CHECK_THROWS_AS(assemble(spec(EquationKind::Poisson2D, 3, {{"eps", {2.0, 0}}})), UnsupportedParams);
  CHECK_THROWS_AS(assemble(spec(EquationKind::AnisotropicPoisson2D, 3)), UnsupportedParams);
  CHECK_THROWS_AS(assemble(spec(EquationKind::Poisson1D, 1)), UnsupportedParams);
  CHECK(kind_from_string("Mehrstellen2D") == EquationKind::Mehrstellen2D);
  CHECK(to_string(EquationKind::CrankNicolson2D) == "CrankNicolson2D");
  CHECK_THROWS(kind_from_string("Poisson3D"));
}

TEST_CASE("h-expressions") {
  const auto a = ParamValue::parse("h/2");
  CHECK(a.coef == 0.5);
  CHECK(a.h_power == 1);
  const auto b = ParamValue::parse("-1/h");
  CHECK(b.coef == -1.0);
  CHECK(b.h_power == -1);
  CHECK(ParamValue::parse("2/h").resolve(0.125) == 16.0);
  CHECK(ParamValue::parse("0.5*h").resolve(0.5) == 0.25);
  CHECK(ParamValue::parse(ParamValue{3.0, -1}.to_string()).coef == 3.0);
  CHECK_THROWS(ParamValue::parse("h^2"));
}
