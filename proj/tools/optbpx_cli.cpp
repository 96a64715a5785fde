// optbpx: train and evaluate modified BPX preconditioners.
//
//   optbpx run    --config cfg.json [--out DIR] [--seed N] [--format csv|md]
//   optbpx table  --config cfg.json [--out FILE] [--format csv|md]   (baselines only)
//   optbpx basis  --params params.json --level l [--out FILE]
//   optbpx verify [--params params.json] [--seed N]
//
// Exit status: 0 success, 1 a verification check failed, 2 runtime or config error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "optbpx/bpx.hpp"
#include "optbpx/error.hpp"
#include "optbpx/harness.hpp"
#include "optbpx/io.hpp"

namespace fs = std::filesystem;
using namespace optbpx;

namespace {

harness::ExperimentConfig load(const std::string& path, const std::string& out,
                               std::optional<std::uint64_t> seed) {
  auto cfg = harness::load_config(path);
  if (!out.empty()) cfg.output = out;
  if (seed) {
    cfg.seed = *seed;
    cfg.loss.estimator.seed = *seed;
  }
  return cfg;
}

int cmd_run(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
            const std::string& format) {
  const auto cfg = load(config, out, seed);
  const auto fmt = harness::format_from_string(format);
  std::vector<harness::ReportRow> rows;
  for (int l : cfg.levels) {
    std::fprintf(stderr, "%s L=%d (%s)\n", std::string(discretize::to_string(cfg.equation.kind)).c_str(), l,
                 harness::variant_tag(cfg).c_str());
    if (cfg.mode == harness::Mode::BaselineOnly) {
      rows.push_back(harness::run_baseline(cfg, l));
    } else {
      auto res = harness::run_experiment(cfg, l);
      if (res.run.aborted) std::fprintf(stderr, "  aborted: %s\n", res.run.abort_reason.c_str());
      rows.push_back(std::move(res.row));
    }
  }
  const auto name = fmt == harness::TableFormat::Csv ? "table.csv" : "table.md";
  harness::emit_table(rows, fmt, cfg.output / name);
  std::cout << harness::render_table(rows, fmt);
  return 0;
}

int cmd_table(const std::string& config, const std::string& out, const std::string& format) {
  auto cfg = load(config, "", std::nullopt);
  cfg.mode = harness::Mode::BaselineOnly;
  const auto fmt = harness::format_from_string(format);
  const auto rows = harness::run_all(cfg);
  if (!out.empty()) harness::emit_table(rows, fmt, out);
  std::cout << harness::render_table(rows, fmt);
  return 0;
}

int cmd_basis(const std::string& params_path, int level, const std::string& out) {
  const auto p = io::load_params(params_path);
  if (level < 1 || level > p.levels) {
    throw ConfigError("--level must lie in [1, " + std::to_string(p.levels) + "]");
  }
  const fs::path path = out.empty() ? fs::path("basis_l" + std::to_string(level) + ".csv") : fs::path(out);
  bpx::export_basis(p, level, path);
  std::cout << path.string() << '\n';
  return 0;
}

int cmd_verify(const std::string& params_path, std::optional<std::uint64_t> seed) {
  harness::VerifyOptions opts;
  if (seed) opts.seed = *seed;
  if (!params_path.empty()) opts.params = io::load_params(params_path);
  bool ok = true;
  for (const auto& c : harness::verify_suite(opts)) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned BPX preconditioners"};
  app.set_version_flag("--version", harness::kVersion);
  app.require_subcommand(1);

  std::string config, out, format = "csv", params;
  std::optional<std::uint64_t> seed;
  int level = 1;

  auto* run = app.add_subcommand("run", "Train for every L in a config and write the results table");
  run->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (overrides the config)");
  run->add_option("--seed", seed, "Seed (overrides the config)");
  run->add_option("--format", format, "Table format")->check(CLI::IsMember({"csv", "md", "markdown"}));

  auto* table = app.add_subcommand("table", "Classical baselines for a config");
  table->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  table->add_option("--out", out, "Write the table to this file");
  table->add_option("--format", format, "Table format")->check(CLI::IsMember({"csv", "md", "markdown"}));

  auto* basis = app.add_subcommand("basis", "Export the middle basis function of one level");
  basis->add_option("--params", params, "Parameter JSON")->required()->check(CLI::ExistingFile);
  basis->add_option("--level", level, "Level l")->required();
  basis->add_option("--out", out, "CSV path");

  auto* verify = app.add_subcommand("verify", "Run the invariant checks");
  verify->add_option("--params", params, "Parameter JSON")->check(CLI::ExistingFile);
  verify->add_option("--seed", seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(config, out, seed, format);
    if (*table) return cmd_table(config, out, format);
    if (*basis) return cmd_basis(params, level, out);
    if (*verify) return cmd_verify(params, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
