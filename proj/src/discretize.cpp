#include "optbpx/discretize.hpp"

#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "optbpx/error.hpp"
#include "optbpx/spectral.hpp"

namespace optbpx::discretize {

namespace {

struct KindInfo {
  EquationKind kind;
  std::string_view name;
  int dim;
  std::set<std::string> required;
};

const std::array<KindInfo, 10>& kind_table() {
  static const std::array<KindInfo, 10> table{{
      {EquationKind::Poisson1D, "Poisson1D", 1, {}},
      {EquationKind::Poisson2D, "Poisson2D", 2, {}},
      {EquationKind::Mehrstellen2D, "Mehrstellen2D", 2, {}},
      {EquationKind::Helmholtz2D, "Helmholtz2D", 2, {"k2h"}},
      {EquationKind::AnisotropicPoisson2D, "AnisotropicPoisson2D", 2, {"eps"}},
      {EquationKind::Biharmonic2D, "Biharmonic2D", 2, {}},
      {EquationKind::ConvectionDiffusion2D, "ConvectionDiffusion2D", 2, {"vx", "vy"}},
      {EquationKind::DiscontinuousDiffusion2D, "DiscontinuousDiffusion2D", 2, {"sigma"}},
      {EquationKind::MixedDerivative2D, "MixedDerivative2D", 2, {"tau"}},
      {EquationKind::CrankNicolson2D, "CrankNicolson2D", 2, {"mu"}},
  }};
  return table;
}

const KindInfo& info(EquationKind kind) {
  for (const auto& k : kind_table()) {
    if (k.kind == kind) return k;
  }
  throw Error("unknown equation kind");
}

std::size_t interior_points(int levels) { return (std::size_t{1} << levels) - 1; }

// Bilinear element on [0,h]^2; local nodes (0,0), (1,0), (0,1), (1,1).
using Element = std::array<std::array<double, 4>, 4>;

struct ElementTerms {
  Element symmetric{};
  Element convection{};
};

ElementTerms element_matrices(double h, double ax, double ay, double tau, double shift,
                              Convection v) {
  ElementTerms out;
  const double g = 0.5 / std::sqrt(3.0);
  const std::array<double, 2> q{0.5 - g, 0.5 + g};
  const double w = h * h / 4.0;
  for (double s : q) {
    for (double t : q) {
      const std::array<double, 4> phi{(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t};
      const std::array<double, 4> dx{-(1 - t) / h, (1 - t) / h, -t / h, t / h};
      const std::array<double, 4> dy{-(1 - s) / h, -s / h, (1 - s) / h, s / h};
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          out.symmetric[a][b] += w * (ax * dx[a] * dx[b] + ay * dy[a] * dy[b] +
                                      tau * (dx[a] * dy[b] + dy[a] * dx[b]) +
                                      shift * phi[a] * phi[b]);
          out.convection[a][b] += w * phi[a] * (v.vx * dx[b] + v.vy * dy[b]);
        }
      }
    }
  }
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < a; ++b) out.symmetric[a][b] = out.symmetric[b][a];
  }
  return out;
}

SparseOperator stencil_2d(int levels, const std::vector<std::array<int, 3>>& taps,
                          bool symmetric) {
  const auto n = static_cast<long>(interior_points(levels));
  std::vector<SparseOperator::Triplet> trip;
  for (long iy = 0; iy < n; ++iy) {
    for (long ix = 0; ix < n; ++ix) {
      const auto row = static_cast<std::size_t>(iy * n + ix);
      for (const auto& [dx, dy, c] : taps) {
        const long jx = ix + dx, jy = iy + dy;
        if (jx < 0 || jy < 0 || jx >= n || jy >= n) continue;
        trip.push_back({row, static_cast<std::size_t>(jy * n + jx), static_cast<double>(c)});
      }
    }
  }
  return SparseOperator::from_triplets(static_cast<std::size_t>(n * n), std::move(trip), symmetric);
}

}  // namespace

std::string_view to_string(EquationKind kind) { return info(kind).name; }

EquationKind kind_from_string(std::string_view name) {
  for (const auto& k : kind_table()) {
    if (k.name == name) return k.kind;
  }
  throw UnsupportedParams("unknown equation kind '" + std::string(name) + "'");
}

int dimension(EquationKind kind) { return info(kind).dim; }

double ParamValue::resolve(double h) const { return coef * std::pow(h, h_power); }

ParamValue ParamValue::parse(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (c != ' ') s.push_back(c);
  }
  auto number = [&](const std::string& t) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size() || t.empty()) {
      throw UnsupportedParams("cannot parse parameter value '" + std::string(text) + "'");
    }
    return v;
  };
  double sign = 1.0;
  if (!s.empty() && s.front() == '-') {
    sign = -1.0;
    s.erase(0, 1);
  }
  if (s == "h") return {sign, 1};
  if (s.size() > 2 && s.ends_with("/h")) return {sign * number(s.substr(0, s.size() - 2)), -1};
  if (s.size() > 2 && s.ends_with("*h")) return {sign * number(s.substr(0, s.size() - 2)), 1};
  if (s.size() > 2 && s.starts_with("h/")) return {sign / number(s.substr(2)), 1};
  if (s.size() > 2 && s.starts_with("h*")) return {sign * number(s.substr(2)), 1};
  return {sign * number(s), 0};
}

std::string ParamValue::to_string() const {
  std::ostringstream os;
  os.precision(17);
  if (h_power == 0) {
    os << coef;
  } else if (h_power == 1) {
    os << coef << "*h";
  } else if (h_power == -1) {
    os << coef << "/h";
  } else {
    os << coef << "*h^" << h_power;
  }
  return os.str();
}

double EquationSpec::h() const { return std::ldexp(1.0, -levels); }

double EquationSpec::param(const std::string& name) const {
  const auto it = params.find(name);
  if (it == params.end()) {
    throw UnsupportedParams(std::string(to_string(kind)) + ": missing parameter '" + name + "'");
  }
  return it->second.resolve(h());
}

void EquationSpec::validate() const {
  if (levels < 2) throw UnsupportedParams("levels must be >= 2");
  const auto& ki = info(kind);
  for (const auto& [key, value] : params) {
    if (!ki.required.contains(key)) {
      throw UnsupportedParams(std::string(ki.name) + ": parameter '" + key +
                              "' does not apply to this equation");
    }
    if (!std::isfinite(value.resolve(h()))) {
      throw UnsupportedParams(std::string(ki.name) + ": parameter '" + key + "' is not finite");
    }
  }
  for (const auto& key : ki.required) {
    if (!params.contains(key)) {
      throw UnsupportedParams(std::string(ki.name) + ": missing parameter '" + key + "'");
    }
  }
  if (kind == EquationKind::ConvectionDiffusion2D) {
    const double vmax = std::max(std::abs(param("vx")), std::abs(param("vy")));
    if (vmax > 2.0 / h() * (1.0 + 1e-12)) {
      throw UnsupportedParams("ConvectionDiffusion2D: max(|vx|,|vy|) exceeds the Peclet bound 2/h");
    }
  }
  if (kind == EquationKind::DiscontinuousDiffusion2D && !(param("sigma") > 0.0)) {
    throw UnsupportedParams("DiscontinuousDiffusion2D: sigma must be positive");
  }
  if (kind == EquationKind::AnisotropicPoisson2D && !(param("eps") > 0.0)) {
    throw UnsupportedParams("AnisotropicPoisson2D: eps must be positive");
  }
  if (kind == EquationKind::CrankNicolson2D && !(param("mu") >= 0.0)) {
    throw UnsupportedParams("CrankNicolson2D: mu must be nonnegative");
  }
}

SparseOperator poisson_1d(int levels) {
  if (levels < 2) throw UnsupportedParams("levels must be >= 2");
  const std::size_t n = interior_points(levels);
  const double inv_h = std::ldexp(1.0, levels);
  std::vector<SparseOperator::Triplet> trip;
  for (std::size_t i = 0; i < n; ++i) {
    trip.push_back({i, i, 2.0 * inv_h});
    if (i > 0) trip.push_back({i, i - 1, -inv_h});
    if (i + 1 < n) trip.push_back({i, i + 1, -inv_h});
  }
  return SparseOperator::from_triplets(n, std::move(trip), true);
}

SparseOperator fem_2d(int levels, const CellCoefficient& coeff, double shift,
                      Convection convection, double tau) {
  if (levels < 2) throw UnsupportedParams("levels must be >= 2");
  if (std::abs(tau) >= 1.0) throw HyperbolicRegime("mixed derivative weight |tau| >= 1");
  const long cells = 1L << levels;
  const long n = cells - 1;
  const double h = 1.0 / static_cast<double>(cells);
  const bool symmetric = convection.vx == 0.0 && convection.vy == 0.0;

  std::vector<SparseOperator::Triplet> trip;
  trip.reserve(static_cast<std::size_t>(cells * cells * 16 * (symmetric ? 1 : 2)));
  for (long ey = 0; ey < cells; ++ey) {
    for (long ex = 0; ex < cells; ++ex) {
      const auto [ax, ay] = coeff((static_cast<double>(ex) + 0.5) * h,
                                  (static_cast<double>(ey) + 0.5) * h);
      if (!(ax > 0.0) || !(ay > 0.0)) {
        throw UnsupportedParams("fem_2d: cell coefficients must be positive");
      }
      const auto el = element_matrices(h, ax, ay, tau, shift, convection);
      const std::array<std::array<long, 2>, 4> nodes{
          {{ex, ey}, {ex + 1, ey}, {ex, ey + 1}, {ex + 1, ey + 1}}};
      std::array<long, 4> idx{};
      for (int a = 0; a < 4; ++a) {
        const long ix = nodes[a][0], iy = nodes[a][1];
        idx[a] = (ix >= 1 && ix <= n && iy >= 1 && iy <= n) ? (iy - 1) * n + (ix - 1) : -1;
      }
      for (int a = 0; a < 4; ++a) {
        if (idx[a] < 0) continue;
        for (int b = 0; b < 4; ++b) {
          if (idx[b] < 0) continue;
          const auto r = static_cast<std::size_t>(idx[a]);
          const auto c = static_cast<std::size_t>(idx[b]);
          trip.push_back({r, c, el.symmetric[a][b]});
          if (!symmetric) trip.push_back({r, c, el.convection[a][b]});
        }
      }
    }
  }
  return SparseOperator::from_triplets(static_cast<std::size_t>(n * n), std::move(trip), symmetric);
}

SparseOperator mehrstellen_2d(int levels) {
  if (levels < 2) throw UnsupportedParams("levels must be >= 2");
  return stencil_2d(levels,
                    {{-1, -1, -1}, {0, -1, -4}, {1, -1, -1},
                     {-1, 0, -4},  {0, 0, 20},  {1, 0, -4},
                     {-1, 1, -1},  {0, 1, -4},  {1, 1, -1}},
                    true);
}

SparseOperator biharmonic_2d(int levels) {
  if (levels < 2) throw UnsupportedParams("levels must be >= 2");
  const auto n = static_cast<long>(interior_points(levels));
  std::vector<std::array<int, 3>> taps{
      {0, -2, 1}, {-1, -1, 2}, {0, -1, -8}, {1, -1, 2}, {-2, 0, 1}, {-1, 0, -8}, {0, 0, 20},
      {1, 0, -8}, {2, 0, 1},   {-1, 1, 2},  {0, 1, -8}, {1, 1, 2},  {0, 2, 1}};
  std::vector<SparseOperator::Triplet> trip;
  for (long iy = 0; iy < n; ++iy) {
    for (long ix = 0; ix < n; ++ix) {
      const auto row = static_cast<std::size_t>(iy * n + ix);
      for (const auto& [dx, dy, c] : taps) {
        const long jx = ix + dx, jy = iy + dy;
        if (jx < 0 || jy < 0 || jx >= n || jy >= n) continue;
        trip.push_back({row, static_cast<std::size_t>(jy * n + jx), static_cast<double>(c)});
      }
      // Ghost node one step outside the boundary mirrors the first interior node
      // (zero normal derivative), folding its +1 onto the diagonal.
      const int ghosts = (ix == 0) + (ix == n - 1) + (iy == 0) + (iy == n - 1);
      if (ghosts > 0) trip.push_back({row, row, static_cast<double>(ghosts)});
    }
  }
  return SparseOperator::from_triplets(static_cast<std::size_t>(n * n), std::move(trip), true);
}

SparseOperator crank_nicolson_2d(int levels, double mu) {
  if (!(mu >= 0.0)) throw UnsupportedParams("crank_nicolson_2d: mu must be nonnegative");
  const auto k = fem_2d(levels, [](double, double) { return std::pair{1.0, 1.0}; });
  std::vector<SparseOperator::Triplet> trip;
  const auto rp = k.row_ptr();
  const auto ci = k.col_index();
  const auto v = k.values();
  for (std::size_t i = 0; i < k.size(); ++i) {
    trip.push_back({i, i, 1.0});
    for (std::size_t p = rp[i]; p < rp[i + 1]; ++p) trip.push_back({i, ci[p], 0.5 * mu * v[p]});
  }
  return SparseOperator::from_triplets(k.size(), std::move(trip), true);
}

SparseOperator assemble(const EquationSpec& spec) {
  spec.validate();
  const int L = spec.levels;
  const auto unit = [](double, double) { return std::pair{1.0, 1.0}; };
  switch (spec.kind) {
    case EquationKind::Poisson1D:
      return poisson_1d(L);
    case EquationKind::Poisson2D:
      return fem_2d(L, unit);
    case EquationKind::Mehrstellen2D:
      return mehrstellen_2d(L);
    case EquationKind::Helmholtz2D: {
      const double k2 = spec.param("k2h") / spec.h();
      auto a = fem_2d(L, unit, -k2);
      const auto check = spd_check(a);
      if (!check.is_spd) {
        std::ostringstream os;
        os << "Helmholtz2D: operator is indefinite (lambda_min = " << check.lambda_min << ")";
        throw IndefiniteOperator(os.str());
      }
      return a;
    }
    case EquationKind::AnisotropicPoisson2D: {
      const double eps = spec.param("eps");
      return fem_2d(L, [eps](double, double) { return std::pair{1.0, eps}; });
    }
    case EquationKind::Biharmonic2D:
      return biharmonic_2d(L);
    case EquationKind::ConvectionDiffusion2D:
      return fem_2d(L, unit, 0.0, {spec.param("vx"), spec.param("vy")});
    case EquationKind::DiscontinuousDiffusion2D: {
      const double sigma = spec.param("sigma");
      const auto g = [sigma](double t) { return t < 0.5 ? 1.0 / sigma : sigma; };
      return fem_2d(L, [g](double x, double y) {
        const double a = g(x) + g(y);
        return std::pair{a, a};
      });
    }
    case EquationKind::MixedDerivative2D:
      return fem_2d(L, unit, 0.0, {}, spec.param("tau"));
    case EquationKind::CrankNicolson2D:
      return crank_nicolson_2d(L, spec.param("mu"));
  }
  throw Error("unreachable equation kind");
}

SpdCheck spd_check(const SparseOperator& a) {
  if (!a.symmetric()) throw NotSymmetric("spd_check: operator is not flagged symmetric");
  const auto eig = spectral::exact_extreme_eigs(as_map(a));
  return {eig.lambda_min > 0.0, eig.lambda_min};
}

}  // namespace optbpx::discretize
