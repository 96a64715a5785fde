#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "optbpx/bpx.hpp"
#include "optbpx/sparse.hpp"
#include "optbpx/spectral.hpp"

namespace optbpx::optimize {

/// The operator and the fixed (non-trainable) preconditioner structure.
struct Problem {
  const SparseOperator* a = nullptr;
  bpx::Variant variant = bpx::Variant::plain();
  bpx::BoundaryCondition bc = bpx::BoundaryCondition::DD;
  std::vector<std::vector<double>> rescale;

  bpx::Preconditioner make(const bpx::BpxParams& params) const;
  bool symmetric() const { return a->symmetric(); }
};

/// M = gamma I - theta B A B as a linear map.
LinearMap iteration_map(const bpx::Preconditioner& b, const SparseOperator& a, double gamma,
                        double theta);

/// Value and gradient of rho_m(gamma I - theta B A B) for fixed probes.
struct ChainGrad {
  double value = 0.0;
  double dtheta = 0.0;
  bpx::BpxParams domega;
};

struct ChainRequest {
  double gamma = 1.0;
  double theta = 0.0;
  int m = 3;
  int k = 10;
  bool want_theta = true;
  bool want_omega = true;
};

/// Reverse sweep through the k renormalized matvecs of every probe.
ChainGrad chain_grad(const Problem& problem, const bpx::Preconditioner& b,
                     const std::vector<std::vector<double>>& probes, const ChainRequest& req);

struct LossGrad {
  double value = 0.0;
  double theta = 0.0;   // theta used (given for L1, re-solved for L2)
  double dtheta = 0.0;  // L1 only
  bpx::BpxParams domega;
};

/// L1(omega, theta) = rho_m(I - theta B A B).
LossGrad loss_grad_L1(const Problem& problem, const bpx::BpxParams& params, double theta,
                      const spectral::EstimatorConfig& cfg, bool want_omega = true);

/// L2(omega) = rho_m(I - theta(omega) B A B) with theta = 1 / rho_1(B A B); the rho_1
/// probes come from the same config with purpose kThetaPurpose.
LossGrad loss_grad_L2(const Problem& problem, const bpx::BpxParams& params,
                      const spectral::EstimatorConfig& cfg);

inline constexpr std::uint32_t kLossPurpose = 1;
inline constexpr std::uint32_t kThetaPurpose = 2;
inline constexpr std::uint32_t kInitPurpose = 3;
inline constexpr std::uint32_t kVerifyPurpose = 4;

/// 1 / rho_1(B A B) with k = 20, N_batch = 8.
double initial_theta(const Problem& problem, const bpx::BpxParams& params, std::uint64_t seed);

/// L2 with every estimator replaced by an exact eigensolve: rho(I - B A B / lambda_max).
double loss_L2_exact(const Problem& problem, const bpx::BpxParams& params);

/// Exact kappa(B A B); requires a symmetric operator.
spectral::SpectralReport verified_report(const Problem& problem, const bpx::BpxParams& params);

// ------------------------------------------------------------------- ADAM

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// In place: x -= lr * mhat / (sqrt(vhat) + eps).
void adam_step(AdamState& state, std::span<double> x, std::span<const double> grad, double lr,
               const AdamConfig& cfg);

// -------------------------------------------------------------- training

enum class LossKind { L1, L2 };

struct LossConfig {
  LossKind loss = LossKind::L1;
  spectral::EstimatorConfig estimator{};
  /// Initial theta; <= 0 selects 1 / rho_1(B A B).
  double theta = 0.0;
  int n_inner = 1;
  int n_epochs = 500;
  double lr_theta = 1e-2;
  double lr_omega = 1e-3;
  AdamConfig adam{};
  bpx::ParamSelection selection = bpx::ParamSelection::Full;
  /// Fresh probes every epoch; false reuses the epoch-0 probes.
  bool resample = true;
  /// Exact verification period in epochs (best iterate is chosen among these).
  int verify_every = 50;

  void validate() const;
};

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;
  double theta = 0.0;
  std::optional<double> kappa;  // rho_3 in nonsymmetric mode
};

struct RunResult {
  bpx::BpxParams params;  // best verified iterate
  double theta = 0.0;     // theta paired with the best iterate
  int best_epoch = 0;
  double best_score = 0.0;  // kappa, or rho_3 for nonsymmetric operators
  double final_loss = 0.0;
  std::vector<HistoryRow> history;
  bool aborted = false;
  std::string abort_reason;
};

/// Called after every epoch with (epoch, current params, theta, row).
using EpochObserver =
    std::function<void(int, const bpx::BpxParams&, double, const HistoryRow&)>;

RunResult train_l1(const Problem& problem, const bpx::BpxParams& init, const LossConfig& cfg,
                         const EpochObserver& observer = {});
RunResult train_l2(const Problem& problem, const bpx::BpxParams& init, const LossConfig& cfg,
                         const EpochObserver& observer = {});
/// Dispatches on cfg.loss.
RunResult run(const Problem& problem, const bpx::BpxParams& init, const LossConfig& cfg,
              const EpochObserver& observer = {});

// ------------------------------------------------- nonsymmetric reporting

/// Estimator used to judge and report nonsymmetric runs: rho_3 with k = 50, N_batch = 32.
spectral::EstimatorConfig report_estimator(std::uint64_t seed);

struct ThetaSearch {
  double theta = 0.0;
  double rho = 0.0;
};

/// Golden-section minimization of rho_3(I - theta B A B) over (0, 2 theta_0].
ThetaSearch best_theta(const Problem& problem, const bpx::BpxParams& params,
                       const spectral::EstimatorConfig& cfg, double theta0);

// ------------------------------------------------------------- fd check

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t checked = 0;
};

struct FdOptions {
  double step = 1e-5;
  /// 0 checks every trainable coordinate (and theta for L1); otherwise a random subset.
  std::size_t coordinates = 0;
  std::uint64_t seed = 0;
  /// Coordinates with |g| below floor * ||g||_inf are compared against that floor.
  double floor = 1e-3;
};

/// Central differences of the loss with probes held fixed. For L2 the difference is
/// taken through the full composite (theta re-solved at every perturbed point).
FdReport fd_check(const Problem& problem, const bpx::BpxParams& params, double theta,
                  const spectral::EstimatorConfig& cfg, LossKind loss,
                  bpx::ParamSelection selection = bpx::ParamSelection::Full,
                  const FdOptions& opts = {});

}  // namespace optbpx::optimize
