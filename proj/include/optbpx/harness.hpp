#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "optbpx/bpx.hpp"
#include "optbpx/discretize.hpp"
#include "optbpx/optimize.hpp"
#include "optbpx/spectral.hpp"

namespace optbpx::harness {

inline constexpr const char* kVersion = "0.1.0";

enum class Mode { BaselineOnly, ScalesOnly, Full };

/// How the preconditioner variant is chosen. Auto routes DiscontinuousDiffusion2D to
/// Rescaled and AnisotropicPoisson2D to Semicoarsen (s = 1 for eps <= 10, else 2).
/// Jacobi applies plain BPX to D^{-1/2} A D^{-1/2}.
enum class VariantChoice { Auto, Plain, Semicoarsen, Rescaled, Jacobi };

struct ExperimentConfig {
  discretize::EquationSpec equation;  // equation.levels is overwritten per run
  std::vector<int> levels;
  VariantChoice variant = VariantChoice::Auto;
  int s = 2;
  bpx::Axis strong_axis = bpx::Axis::Y;
  bpx::OtherAxis other_axis = bpx::OtherAxis::Denser;
  bool allow_semicoarsen = false;
  bpx::BoundaryCondition bc = bpx::BoundaryCondition::DD;
  Mode mode = Mode::Full;
  optimize::LossConfig loss;
  std::uint64_t seed = 0;
  std::filesystem::path output = "runs";
};

/// Validates and fills defaults. Errors are ConfigError messages that start with the
/// JSON path of the offending field, e.g. "$.optimizer.k: ...".
ExperimentConfig parse_config(const nlohmann::ordered_json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Complete config document; parse_config(config_to_json(c)) reproduces c.
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

/// Variant actually used for an equation after resolving Auto.
bpx::Variant resolve_variant(const ExperimentConfig& cfg);
std::string variant_tag(const ExperimentConfig& cfg);

struct Columns {
  double rho = 0.0;
  std::optional<double> kappa;  // absent for nonsymmetric operators
  int n = 0;
  std::optional<double> lambda_min;
  std::optional<double> lambda_max;
};

struct ReportRow {
  std::string equation;
  int levels = 0;
  std::string variant;
  Columns baseline;
  std::optional<Columns> optimized;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

/// Classical parameters in the routed variant, except that semicoarsening falls back to plain BPX.
ReportRow run_baseline(const ExperimentConfig& cfg, int levels);

struct ExperimentResult {
  ReportRow row;
  optimize::RunResult run;
  std::filesystem::path directory;
};

/// Baseline plus optimized row for one L. Writes params.json, history.csv,
/// checkpoint.json and manifest.json under cfg.output / "<equation>_L<L>".
ExperimentResult run_experiment(const ExperimentConfig& cfg, int levels);

/// Every L of the config (baseline only for Mode::BaselineOnly).
std::vector<ReportRow> run_all(const ExperimentConfig& cfg);

enum class TableFormat { Csv, Markdown };
TableFormat format_from_string(std::string_view s);

std::string render_table(const std::vector<ReportRow>& rows, TableFormat format);
void emit_table(const std::vector<ReportRow>& rows, TableFormat format,
                const std::filesystem::path& path);
/// Reads a table written by emit_table in CSV form.
std::vector<ReportRow> load_table(const std::filesystem::path& path);
std::vector<ReportRow> parse_table_csv(const std::string& text);

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  /// Parameters for the support-bound and preconditioner checks; classical when empty.
  std::optional<bpx::BpxParams> params;
  int draws = 20;
};

/// Invariant batteries at L = 3: SPD assembly, SPD preconditioner, support bound,
/// the exact L2 = 1 - 1/kappa identity, gradient checks, estimator consistency and routing.
std::vector<Check> verify_suite(const VerifyOptions& opts);

}  // namespace optbpx::harness
