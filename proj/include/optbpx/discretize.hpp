#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "optbpx/sparse.hpp"

namespace optbpx::discretize {

enum class EquationKind {
  Poisson1D,
  Poisson2D,
  Mehrstellen2D,
  Helmholtz2D,
  AnisotropicPoisson2D,
  Biharmonic2D,
  ConvectionDiffusion2D,
  DiscontinuousDiffusion2D,
  MixedDerivative2D,
  CrankNicolson2D,
};

std::string_view to_string(EquationKind kind);
EquationKind kind_from_string(std::string_view name);

/// Spatial dimension of the grid the kind is discretized on.
int dimension(EquationKind kind);

/// Scalar parameter that may scale with the finest grid spacing: coef * h^h_power.
/// Parsed from numbers or from strings such as "h/2", "2/h", "-1/h", "0.5*h".
struct ParamValue {
  double coef = 0.0;
  int h_power = 0;

  double resolve(double h) const;
  static ParamValue parse(std::string_view text);
  std::string to_string() const;
};

struct EquationSpec {
  EquationKind kind = EquationKind::Poisson1D;
  int levels = 3;
  /// Keys: k2h, eps, vx, vy, sigma, tau, mu.
  std::map<std::string, ParamValue> params;

  double h() const;
  double param(const std::string& name) const;
  /// Throws UnsupportedParams when a key does not belong to the kind, a required key
  /// is missing, a value is not finite, or levels < 2.
  void validate() const;
};

/// Grid-cell coefficients (a_x, a_y) evaluated at a point, used at cell midpoints.
using CellCoefficient = std::function<std::pair<double, double>(double x, double y)>;

struct Convection {
  double vx = 0.0;
  double vy = 0.0;
};

SparseOperator assemble(const EquationSpec& spec);

/// Linear-FEM stiffness on 2^L - 1 interior nodes: diagonal 2/h, off-diagonal -1/h.
SparseOperator poisson_1d(int levels);

/// Bilinear FEM on the unit square, assembled element by element.
/// Stiffness with diag(a_x, a_y) plus the 2*tau cross term, plus shift * consistent mass,
/// plus Galerkin (centred) first-order convection.
SparseOperator fem_2d(int levels, const CellCoefficient& coeff, double shift = 0.0,
                      Convection convection = {}, double tau = 0.0);

SparseOperator mehrstellen_2d(int levels);
SparseOperator biharmonic_2d(int levels);
SparseOperator crank_nicolson_2d(int levels, double mu);

struct SpdCheck {
  bool is_spd = false;
  double lambda_min = 0.0;
};

SpdCheck spd_check(const SparseOperator& a);

}  // namespace optbpx::discretize
