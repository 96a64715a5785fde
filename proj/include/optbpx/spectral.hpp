#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optbpx/rng.hpp"
#include "optbpx/sparse.hpp"

namespace optbpx::spectral {

/// m selects the estimator: 1 (Rademacher, averaged squares), 2 (one normal probe),
/// 3 (mean of per-probe normal estimates). n_batch is ignored for m = 2.
/// purpose/epoch pick the probe substreams; see probe_stream().
struct EstimatorConfig {
  int m = 3;
  int k = 10;
  int n_batch = 10;
  std::uint64_t seed = 0;
  std::uint32_t purpose = 0;
  std::uint64_t epoch = 0;

  void validate() const;
  int probe_count() const { return m == 2 ? 1 : n_batch; }
  ProbeKind probe_kind() const { return m == 1 ? ProbeKind::Rademacher : ProbeKind::Gaussian; }
};

std::vector<std::vector<double>> draw_probes(const EstimatorConfig& cfg, std::size_t n);

/// k applications of op to z_0 with a power-of-two rescale after each step:
///   z_i = 2^{-shift_i} op(z_{i-1}),  op^k z_0 = 2^{sum shift} z_k.
/// The rescale is exact in floating point, so the chain can be replayed bit for bit.
struct PowerTrace {
  std::vector<std::vector<double>> iterates;  // z_0..z_k, or only z_k if not kept
  std::vector<int> shifts;
  double log_norm = 0.0;        // ln ||op^k z_0||, -inf for a zero result
  double log_probe_norm = 0.0;  // ln ||z_0||
};

PowerTrace power_trace(const LinearMap& op, std::vector<double> z0, int k, bool keep_iterates);

/// Estimator value from finished traces (one per probe).
double combine(int m, int k, std::span<const PowerTrace> traces);

double rho1(const LinearMap& op, const EstimatorConfig& cfg);
double rho2(const LinearMap& op, const EstimatorConfig& cfg);
double rho3(const LinearMap& op, const EstimatorConfig& cfg);
/// Dispatches on cfg.m.
double estimate(const LinearMap& op, const EstimatorConfig& cfg);

struct ExtremeEigs {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  bool dense = true;
};

inline constexpr std::size_t kDenseThreshold = 4096;

/// Extreme eigenvalues of a symmetric map. Dense symmetric eigensolver up to
/// dense_threshold, Lanczos with full reorthogonalization above it.
/// Throws ConvergenceFailure if Lanczos stalls.
ExtremeEigs exact_extreme_eigs(const LinearMap& op, std::size_t dense_threshold = kDenseThreshold);

struct SpectralReport {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double kappa = 0.0;
  double rho = 0.0;
  int iterations = 0;
};

/// Iterations to gain one decimal digit: ceil(-1 / log10 rho), 0 when rho = 0.
int iterations_for(double rho);

/// Throws IndefiniteOperator unless 0 < lambda_min <= lambda_max.
SpectralReport report(double lambda_min, double lambda_max);

inline constexpr std::string_view kReportCsvHeader =
    "equation,L,variant,lambda_min,lambda_max,kappa,rho,N";
std::string report_csv_row(std::string_view equation, int levels, std::string_view variant,
                           const SpectralReport& r);

}  // namespace optbpx::spectral
