#include "optbpx/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include "optbpx/error.hpp"

namespace optbpx::spectral {

void EstimatorConfig::validate() const {
  if (m < 1 || m > 3) throw ConfigError("estimator m must be 1, 2 or 3");
  if (k < 1) throw ConfigError("estimator k must be >= 1");
  if (n_batch < 1) throw ConfigError("estimator n_batch must be >= 1");
}

std::vector<std::vector<double>> draw_probes(const EstimatorConfig& cfg, std::size_t n) {
  return optbpx::draw_probes(cfg.probe_kind(), n, static_cast<std::size_t>(cfg.probe_count()),
                             cfg.seed, cfg.purpose, cfg.epoch);
}

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

PowerTrace power_trace(const LinearMap& op, std::vector<double> z0, int k, bool keep_iterates) {
  PowerTrace t;
  t.log_probe_norm = std::log(norm2(z0));
  t.shifts.reserve(static_cast<std::size_t>(k));
  std::vector<double> cur = std::move(z0);
  std::vector<double> next(cur.size());
  long total = 0;
  if (keep_iterates) t.iterates.push_back(cur);
  for (int i = 0; i < k; ++i) {
    op.apply(cur, next);
    int e = 0;
    const double peak = max_abs(next);
    if (!std::isfinite(peak)) throw NonfiniteLoss("power chain produced a non-finite vector");
    if (peak > 0.0) std::frexp(peak, &e);
    if (e != 0) {
      for (auto& x : next) x = std::ldexp(x, -e);
    }
    total += e;
    t.shifts.push_back(e);
    std::swap(cur, next);
    if (keep_iterates) t.iterates.push_back(cur);
  }
  const double nk = norm2(cur);
  t.log_norm = nk > 0.0 ? static_cast<double>(total) * std::numbers::ln2 + std::log(nk)
                        : -std::numeric_limits<double>::infinity();
  if (!keep_iterates) t.iterates.push_back(std::move(cur));
  return t;
}

double combine(int m, int k, std::span<const PowerTrace> traces) {
  if (traces.empty()) throw ConfigError("combine: no probe traces");
  const double kk = static_cast<double>(k);
  if (m == 1) {
    // ((1/N) sum exp(2 l_j))^{1/2k} via log-sum-exp.
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& t : traces) top = std::max(top, t.log_norm);
    if (!std::isfinite(top)) return 0.0;
    double s = 0.0;
    for (const auto& t : traces) s += std::exp(2.0 * (t.log_norm - top));
    const double n = static_cast<double>(traces.size());
    return std::exp((2.0 * top + std::log(s / n)) / (2.0 * kk));
  }
  if (m == 2) {
    const auto& t = traces.front();
    return std::exp((t.log_norm - t.log_probe_norm) / kk);
  }
  double s = 0.0;
  for (const auto& t : traces) s += std::exp((t.log_norm - t.log_probe_norm) / kk);
  return s / static_cast<double>(traces.size());
}

namespace {

double run_estimator(const LinearMap& op, EstimatorConfig cfg, int m) {
  cfg.m = m;
  cfg.validate();
  auto probes = draw_probes(cfg, op.size);
  std::vector<PowerTrace> traces;
  traces.reserve(probes.size());
  for (auto& z : probes) traces.push_back(power_trace(op, std::move(z), cfg.k, false));
  return combine(m, cfg.k, traces);
}

}  // namespace

double rho1(const LinearMap& op, const EstimatorConfig& cfg) { return run_estimator(op, cfg, 1); }
double rho2(const LinearMap& op, const EstimatorConfig& cfg) { return run_estimator(op, cfg, 2); }
double rho3(const LinearMap& op, const EstimatorConfig& cfg) { return run_estimator(op, cfg, 3); }

double estimate(const LinearMap& op, const EstimatorConfig& cfg) {
  return run_estimator(op, cfg, cfg.m);
}

// ----------------------------------------------------------- eigenvalues

namespace {

ExtremeEigs dense_extremes(const LinearMap& op) {
  const auto n = static_cast<Eigen::Index>(op.size);
  const auto d = assemble_dense(op);
  Eigen::MatrixXd a = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                     Eigen::RowMajor>>(d.data(), n, n);
  a = 0.5 * (a + a.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceFailure("dense symmetric eigensolver failed");
  const auto& ev = es.eigenvalues();
  return {ev(0), ev(n - 1), true};
}

// Largest eigenvalue of a symmetric map by Lanczos with full reorthogonalization.
double lanczos_largest(const LinearMap& op, double scale_hint, std::uint64_t stream) {
  const std::size_t n = op.size;
  const int max_iter = static_cast<int>(std::min<std::size_t>(n, 1500));
  constexpr double kTol = 1e-10;

  std::vector<std::vector<double>> basis;
  std::vector<double> alpha, beta;
  std::vector<double> v(n), w(n);
  Philox rng(0x5eed, stream);
  for (auto& x : v) x = rng.next_normal();
  const double v0 = norm2(v);
  for (auto& x : v) x /= v0;

  double ritz = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  for (int j = 0; j < max_iter; ++j) {
    basis.push_back(v);
    op.apply(v, w);
    const double a = std::inner_product(w.begin(), w.end(), v.begin(), 0.0);
    alpha.push_back(a);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis) {
        const double c = std::inner_product(w.begin(), w.end(), q.begin(), 0.0);
        for (std::size_t i = 0; i < n; ++i) w[i] -= c * q[i];
      }
    }
    const double b = norm2(w);

    const auto m = static_cast<Eigen::Index>(alpha.size());
    Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub(std::max<Eigen::Index>(m - 1, 0));
    for (Eigen::Index i = 0; i + 1 < m; ++i) sub(i) = beta[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw ConvergenceFailure("Lanczos: tridiagonal solve failed");
    ritz = es.eigenvalues()(m - 1);
    residual = b * std::abs(es.eigenvectors()(m - 1, m - 1));
    const double scale = std::max({std::abs(ritz), scale_hint, 1e-300});
    if (residual <= kTol * scale || b <= kTol * scale) return ritz;
    beta.push_back(b);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / b;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "Lanczos did not converge in %d iterations (ritz %.6e, residual %.3e)",
                max_iter, ritz, residual);
  throw ConvergenceFailure(buf);
}

}  // namespace

ExtremeEigs exact_extreme_eigs(const LinearMap& op, std::size_t dense_threshold) {
  if (op.size == 0) throw ConfigError("exact_extreme_eigs: empty operator");
  if (op.size <= dense_threshold) return dense_extremes(op);
  const double top = lanczos_largest(op, 0.0, 1);
  const std::size_t n = op.size;
  const LinearMap shifted{n, [&op, top, n](std::span<const double> x, std::span<double> y) {
                            op.apply(x, y);
                            for (std::size_t i = 0; i < n; ++i) y[i] = top * x[i] - y[i];
                          }};
  const double gap = lanczos_largest(shifted, std::abs(top), 2);
  return {top - gap, top, false};
}

int iterations_for(double rho) {
  if (rho == 0.0) return 0;
  if (!(rho > 0.0 && rho < 1.0)) throw Error("iterations_for: rho must lie in [0, 1)");
  return static_cast<int>(std::ceil(-1.0 / std::log10(rho)));
}

SpectralReport report(double lambda_min, double lambda_max) {
  if (!(lambda_min > 0.0) || !(lambda_max >= lambda_min)) {
    throw IndefiniteOperator("report: need 0 < lambda_min <= lambda_max");
  }
  SpectralReport r;
  r.lambda_min = lambda_min;
  r.lambda_max = lambda_max;
  r.kappa = lambda_max / lambda_min;
  r.rho = (r.kappa - 1.0) / (r.kappa + 1.0);
  r.iterations = iterations_for(r.rho);
  return r;
}

std::string report_csv_row(std::string_view equation, int levels, std::string_view variant,
                           const SpectralReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, ",%d,", levels);
  std::string row(equation);
  row += buf;
  row += variant;
  std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%d", r.lambda_min, r.lambda_max, r.kappa,
                r.rho, r.iterations);
  row += buf;
  return row;
}

}  // namespace optbpx::spectral
