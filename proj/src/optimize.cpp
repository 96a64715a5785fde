#include "optbpx/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "optbpx/error.hpp"
#include "optbpx/rng.hpp"

namespace optbpx::optimize {

using bpx::BpxParams;
using bpx::Preconditioner;

bpx::Preconditioner Problem::make(const BpxParams& params) const {
  return Preconditioner(params, variant, bc, rescale);
}

namespace {

struct Workspace {
  std::vector<double> t1, t2, t3;
  explicit Workspace(std::size_t n) : t1(n), t2(n), t3(n) {}
};

// y = gamma x - theta B A B x; leaves B x, A B x, B A B x in ws.
void iterate(const Preconditioner& b, const SparseOperator& a, double gamma, double theta,
             std::span<const double> x, std::span<double> y, Workspace& ws) {
  b.apply(x, ws.t1);
  a.apply(ws.t1, ws.t2);
  b.apply(ws.t2, ws.t3);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gamma * x[i] - theta * ws.t3[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

bool all_finite(const BpxParams& p) {
  auto ok = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!ok(p.alpha)) return false;
  for (std::size_t l = 0; l < p.eta.size(); ++l) {
    if (!ok(p.eta[l]) || !ok(p.xi[l])) return false;
  }
  return true;
}

spectral::EstimatorConfig with_purpose(spectral::EstimatorConfig cfg, std::uint32_t purpose) {
  cfg.purpose = purpose;
  return cfg;
}

spectral::EstimatorConfig theta_estimator(const spectral::EstimatorConfig& cfg) {
  auto t = with_purpose(cfg, kThetaPurpose);
  t.m = 1;
  return t;
}

}  // namespace

LinearMap iteration_map(const Preconditioner& b, const SparseOperator& a, double gamma,
                        double theta) {
  if (a.size() != b.size()) throw UnsupportedParams("preconditioner and operator sizes differ");
  return {a.size(), [&b, &a, gamma, theta](std::span<const double> x, std::span<double> y) {
            Workspace ws(x.size());
            iterate(b, a, gamma, theta, x, y, ws);
          }};
}

ChainGrad chain_grad(const Problem& problem, const Preconditioner& b,
                     const std::vector<std::vector<double>>& probes, const ChainRequest& req) {
  const SparseOperator& a = *problem.a;
  const std::size_t n = a.size();
  if (b.size() != n) throw UnsupportedParams("preconditioner and operator sizes differ");
  if (probes.empty()) throw ConfigError("chain_grad: no probes");
  const std::size_t used = req.m == 2 ? 1 : probes.size();
  const bool backward = req.want_theta || req.want_omega;

  ChainGrad out;
  out.domega = BpxParams::zeros(b.params().levels, b.params().dim);

  // Forward: record the intermediates A B z_{i-1} and B A B z_{i-1} of every step.
  std::vector<spectral::PowerTrace> traces;
  std::vector<std::vector<std::vector<double>>> abz(used), babz(used);
  Workspace ws(n);
  for (std::size_t j = 0; j < used; ++j) {
    auto& ab = abz[j];
    auto& bab = babz[j];
    const LinearMap recorder{n, [&](std::span<const double> x, std::span<double> y) {
                               iterate(b, a, req.gamma, req.theta, x, y, ws);
                               if (backward) {
                                 ab.push_back(ws.t2);
                                 bab.push_back(ws.t3);
                               }
                             }};
    traces.push_back(spectral::power_trace(recorder, probes[j], req.k, backward));
  }
  out.value = spectral::combine(req.m, req.k, traces);
  if (!std::isfinite(out.value)) throw NonfiniteLoss("loss value is not finite");
  if (!backward) return out;

  // d rho / d l_j, with l_j = ln ||M^k z_j||.
  const double kk = static_cast<double>(req.k);
  std::vector<double> coef(used, 0.0);
  if (req.m == 1) {
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& t : traces) top = std::max(top, t.log_norm);
    if (std::isfinite(top)) {
      double s = 0.0;
      for (const auto& t : traces) s += std::exp(2.0 * (t.log_norm - top));
      for (std::size_t j = 0; j < used; ++j) {
        coef[j] = out.value * std::exp(2.0 * (traces[j].log_norm - top)) / s / kk;
      }
    }
  } else if (req.m == 2) {
    coef[0] = out.value / kk;
  } else {
    for (std::size_t j = 0; j < used; ++j) {
      const double rj = std::exp((traces[j].log_norm - traces[j].log_probe_norm) / kk);
      coef[j] = rj / (kk * static_cast<double>(used));
    }
  }

  const int kint = req.k;
  std::vector<double> g(n), gt(n), bg(n), atbg(n), batbg(n);
  for (std::size_t j = 0; j < used; ++j) {
    const auto& t = traces[j];
    if (coef[j] == 0.0 || !std::isfinite(t.log_norm)) continue;
    const auto& zk = t.iterates.back();
    const double nz2 = dot(zk, zk);
    for (std::size_t i = 0; i < n; ++i) g[i] = coef[j] * zk[i] / nz2;
    for (int step = kint; step >= 1; --step) {
      const auto s = static_cast<std::size_t>(step);
      const int e = t.shifts[s - 1];
      for (std::size_t i = 0; i < n; ++i) gt[i] = std::ldexp(g[i], -e);
      if (req.want_theta) out.dtheta -= dot(gt, babz[j][s - 1]);
      b.apply(gt, bg);
      if (a.symmetric()) {
        a.apply(bg, atbg);
      } else {
        a.apply_transpose(bg, atbg);
      }
      if (req.want_omega) {
        b.accumulate_bilinear_grad(gt, abz[j][s - 1], -req.theta, out.domega);
        b.accumulate_bilinear_grad(atbg, t.iterates[s - 1], -req.theta, out.domega);
      }
      if (step > 1) {
        b.apply(atbg, batbg);
        for (std::size_t i = 0; i < n; ++i) g[i] = req.gamma * gt[i] - req.theta * batbg[i];
      }
    }
  }
  if (!std::isfinite(out.dtheta) || !all_finite(out.domega)) {
    throw NonfiniteLoss("loss gradient is not finite");
  }
  return out;
}

LossGrad loss_grad_L1(const Problem& problem, const BpxParams& params, double theta,
                      const spectral::EstimatorConfig& cfg, bool want_omega) {
  cfg.validate();
  const auto b = problem.make(params);
  const auto est = with_purpose(cfg, kLossPurpose);
  const auto probes = spectral::draw_probes(est, b.size());
  auto r = chain_grad(problem, b, probes, {1.0, theta, cfg.m, cfg.k, true, want_omega});
  return {r.value, theta, r.dtheta, std::move(r.domega)};
}

LossGrad loss_grad_L2(const Problem& problem, const BpxParams& params,
                      const spectral::EstimatorConfig& cfg) {
  cfg.validate();
  if (!problem.symmetric()) throw NotSymmetric("L2 loss requires a symmetric operator");
  const auto b = problem.make(params);
  const auto test = theta_estimator(cfg);
  const auto rho_c = chain_grad(problem, b, spectral::draw_probes(test, b.size()),
                                {0.0, -1.0, 1, cfg.k, false, true});
  if (!(rho_c.value > std::numeric_limits<double>::min())) {
    throw ZeroRho("rho_1(BAB) estimate underflowed");
  }
  const double theta = 1.0 / rho_c.value;
  const auto est = with_purpose(cfg, kLossPurpose);
  auto r = chain_grad(problem, b, spectral::draw_probes(est, b.size()),
                      {1.0, theta, cfg.m, cfg.k, true, true});
  // d L2 = d_omega rho_m |theta - theta^2 (d_theta rho_m) d_omega rho_1(BAB)
  const double c = -theta * theta * r.dtheta;
  auto add = [c](std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
  };
  add(r.domega.alpha, rho_c.domega.alpha);
  for (std::size_t l = 0; l < r.domega.eta.size(); ++l) {
    add(r.domega.eta[l], rho_c.domega.eta[l]);
    add(r.domega.xi[l], rho_c.domega.xi[l]);
  }
  if (!all_finite(r.domega)) throw NonfiniteLoss("L2 gradient is not finite");
  return {r.value, theta, 0.0, std::move(r.domega)};
}

double initial_theta(const Problem& problem, const BpxParams& params, std::uint64_t seed) {
  const auto b = problem.make(params);
  spectral::EstimatorConfig cfg{1, 20, 8, seed, kInitPurpose, 0};
  const double r = spectral::rho1(iteration_map(b, *problem.a, 0.0, -1.0), cfg);
  if (!(r > std::numeric_limits<double>::min()) || !std::isfinite(r)) {
    throw ZeroRho("initial theta: rho_1(BAB) is zero or not finite");
  }
  return 1.0 / r;
}

spectral::SpectralReport verified_report(const Problem& problem, const BpxParams& params) {
  if (!problem.symmetric()) throw NotSymmetric("exact verification requires a symmetric operator");
  const auto b = problem.make(params);
  const auto e = spectral::exact_extreme_eigs(bpx::symmetric_map(b, *problem.a));
  return spectral::report(e.lambda_min, e.lambda_max);
}

double loss_L2_exact(const Problem& problem, const BpxParams& params) {
  if (!problem.symmetric()) throw NotSymmetric("L2 loss requires a symmetric operator");
  const auto b = problem.make(params);
  const auto c = spectral::exact_extreme_eigs(bpx::symmetric_map(b, *problem.a));
  const auto m = spectral::exact_extreme_eigs(iteration_map(b, *problem.a, 1.0, 1.0 / c.lambda_max));
  return std::max(std::abs(m.lambda_min), std::abs(m.lambda_max));
}

// ------------------------------------------------------------------- ADAM

void adam_step(AdamState& state, std::span<double> x, std::span<const double> grad, double lr,
               const AdamConfig& cfg) {
  if (state.m.size() != x.size() || grad.size() != x.size()) {
    throw ConfigError("adam_step: moment, parameter and gradient sizes differ");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < x.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    x[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// -------------------------------------------------------------- training

void LossConfig::validate() const {
  estimator.validate();
  if (n_inner < 1) throw ConfigError("n_inner must be >= 1");
  if (n_epochs < 0) throw ConfigError("n_epochs must be >= 0");
  if (!(lr_theta >= 0.0) || !(lr_omega >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0)) {
    throw ConfigError("ADAM needs 0 <= beta1, beta2 < 1 and eps > 0");
  }
  if (verify_every < 1) throw ConfigError("verify_every must be >= 1");
  if (!std::isfinite(theta)) throw ConfigError("theta must be finite");
}

spectral::EstimatorConfig report_estimator(std::uint64_t seed) {
  return {3, 50, 32, seed, kVerifyPurpose, 0};
}

ThetaSearch best_theta(const Problem& problem, const BpxParams& params,
                       const spectral::EstimatorConfig& cfg, double theta0) {
  const auto b = problem.make(params);
  auto f = [&](double theta) {
    return spectral::estimate(iteration_map(b, *problem.a, 1.0, theta), cfg);
  };
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = 2.0 * theta0;
  double x1 = hi - invphi * (hi - lo), x2 = lo + invphi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 60 && (hi - lo) > 1e-7 * theta0; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? ThetaSearch{x1, f1} : ThetaSearch{x2, f2};
}

namespace {

struct Scorer {
  const Problem& problem;
  std::uint64_t seed;
  double theta_ref;

  double operator()(const BpxParams& params, double theta) const {
    if (problem.symmetric()) return verified_report(problem, params).kappa;
    return best_theta(problem, params, report_estimator(seed), std::max(theta, theta_ref)).rho;
  }
};

spectral::EstimatorConfig epoch_estimator(const LossConfig& cfg, int epoch) {
  auto est = cfg.estimator;
  est.epoch = cfg.resample ? static_cast<std::uint64_t>(epoch) : 0;
  return est;
}

template <typename EpochFn>
RunResult train(const Problem& problem, const BpxParams& init, const LossConfig& cfg,
                double theta, const EpochObserver& observer, EpochFn&& epoch_fn) {
  RunResult res;
  BpxParams params = init;
  const Scorer score{problem, cfg.estimator.seed, theta};
  res.params = params;
  res.theta = theta;
  res.best_epoch = 0;
  res.best_score = score(params, theta);
  for (int epoch = 1; epoch <= cfg.n_epochs; ++epoch) {
    HistoryRow row;
    row.epoch = epoch;
    try {
      epoch_fn(epoch, params, theta, row);
      if (epoch % cfg.verify_every == 0 || epoch == cfg.n_epochs) {
        const double s = score(params, theta);
        row.kappa = s;
        if (std::isfinite(s) && s < res.best_score) {
          res.best_score = s;
          res.best_epoch = epoch;
          res.params = params;
          res.theta = theta;
        }
      }
    } catch (const NonfiniteLoss& e) {
      res.aborted = true;
      res.abort_reason = e.what();
      break;
    } catch (const ZeroRho& e) {
      res.aborted = true;
      res.abort_reason = e.what();
      break;
    }
    res.final_loss = row.loss;
    res.history.push_back(row);
    if (observer) observer(epoch, params, theta, row);
  }
  return res;
}

}  // namespace

RunResult train_l1(const Problem& problem, const BpxParams& init, const LossConfig& cfg,
                         const EpochObserver& observer) {
  cfg.validate();
  const double theta0 = cfg.theta > 0.0 ? cfg.theta : initial_theta(problem, init, cfg.estimator.seed);
  auto flat = bpx::flatten(init, cfg.selection);
  AdamState omega_state(flat.size());
  AdamState theta_state(1);
  // ADAM acts on t = ln(theta / theta0), which keeps theta positive.
  std::vector<double> t{0.0};

  return train(problem, init, cfg, theta0, observer,
               [&](int epoch, BpxParams& params, double& theta, HistoryRow& row) {
                 const auto est = epoch_estimator(cfg, epoch);
                 for (int inner = 0; inner < cfg.n_inner; ++inner) {
                   const auto lg = loss_grad_L1(problem, params, theta, est, false);
                   const double gt = lg.dtheta * theta;
                   adam_step(theta_state, t, std::span<const double>(&gt, 1), cfg.lr_theta, cfg.adam);
                   theta = theta0 * std::exp(t[0]);
                 }
                 const auto lg = loss_grad_L1(problem, params, theta, est, true);
                 const auto g = bpx::flatten(lg.domega, cfg.selection);
                 adam_step(omega_state, flat, g, cfg.lr_omega, cfg.adam);
                 bpx::unflatten(flat, params, cfg.selection);
                 row.loss = lg.value;
                 row.theta = theta;
               });
}

RunResult train_l2(const Problem& problem, const BpxParams& init, const LossConfig& cfg,
                         const EpochObserver& observer) {
  cfg.validate();
  if (!problem.symmetric()) throw NotSymmetric("L2 training requires a symmetric operator");
  auto flat = bpx::flatten(init, cfg.selection);
  AdamState omega_state(flat.size());
  const double theta0 = initial_theta(problem, init, cfg.estimator.seed);

  return train(problem, init, cfg, theta0, observer,
               [&](int epoch, BpxParams& params, double& theta, HistoryRow& row) {
                 const auto est = epoch_estimator(cfg, epoch);
                 const auto lg = loss_grad_L2(problem, params, est);
                 const auto g = bpx::flatten(lg.domega, cfg.selection);
                 adam_step(omega_state, flat, g, cfg.lr_omega, cfg.adam);
                 bpx::unflatten(flat, params, cfg.selection);
                 theta = lg.theta;
                 row.loss = lg.value;
                 row.theta = theta;
               });
}

RunResult run(const Problem& problem, const BpxParams& init, const LossConfig& cfg,
              const EpochObserver& observer) {
  return cfg.loss == LossKind::L1 ? train_l1(problem, init, cfg, observer)
                                  : train_l2(problem, init, cfg, observer);
}

// ------------------------------------------------------------- fd check

FdReport fd_check(const Problem& problem, const BpxParams& params, double theta,
                  const spectral::EstimatorConfig& cfg, LossKind loss,
                  bpx::ParamSelection selection, const FdOptions& opts) {
  const bool l1 = loss == LossKind::L1;
  const auto base = bpx::flatten(params, selection);
  std::vector<double> ad;
  if (l1) {
    const auto lg = loss_grad_L1(problem, params, theta, cfg, true);
    ad = bpx::flatten(lg.domega, selection);
    ad.push_back(lg.dtheta);
  } else {
    ad = bpx::flatten(loss_grad_L2(problem, params, cfg).domega, selection);
  }

  auto value = [&](std::span<const double> x) {
    BpxParams p = params;
    bpx::unflatten(x.first(base.size()), p, selection);
    if (l1) return loss_grad_L1(problem, p, x[base.size()], cfg, false).value;
    const auto b = problem.make(p);
    const auto rc = spectral::rho1(iteration_map(b, *problem.a, 0.0, -1.0), theta_estimator(cfg));
    return spectral::estimate(iteration_map(b, *problem.a, 1.0, 1.0 / rc),
                              with_purpose(cfg, kLossPurpose));
  };

  std::vector<double> x = base;
  if (l1) x.push_back(theta);
  std::vector<std::size_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opts.coordinates > 0 && opts.coordinates < coords.size()) {
    Philox rng(opts.seed, 0xFDull);
    for (std::size_t i = 0; i < opts.coordinates; ++i) {
      const std::size_t j = i + rng.next_u64() % (coords.size() - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(opts.coordinates);
  }

  double gmax = 0.0;
  for (double v : ad) gmax = std::max(gmax, std::abs(v));
  FdReport rep;
  for (std::size_t i : coords) {
    const bool is_theta = l1 && i == base.size();
    const double h = opts.step * (is_theta ? std::abs(x[i]) : std::max(1.0, std::abs(x[i])));
    auto xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (value(xp) - value(xm)) / (2.0 * h);
    const double denom = std::max({std::abs(fd), opts.floor * gmax, 1e-300});
    const double err = std::abs(ad[i] - fd) / denom;
    if (err > rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst_coordinate = i;
    }
    ++rep.checked;
  }
  return rep;
}

}  // namespace optbpx::optimize
