#include "optbpx/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "optbpx/error.hpp"
#include "optbpx/io.hpp"
#include "optbpx/rng.hpp"

namespace optbpx::harness {

using json = nlohmann::ordered_json;
using discretize::EquationKind;

// ------------------------------------------------------------------ config

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) fail(path + "." + key, "unknown field");
  }
}

long long get_int(const json& j, const std::string& path) {
  if (j.is_number_integer() || j.is_number_unsigned()) return j.get<long long>();
  if (j.is_number_float()) {
    const double d = j.get<double>();
    if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<long long>(d);
  }
  fail(path, "expected an integer");
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double d = j.get<double>();
  if (!std::isfinite(d)) fail(path, "must be finite");
  return d;
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::BaselineOnly: return "baseline_only";
    case Mode::ScalesOnly: return "scales_only";
    case Mode::Full: return "full";
  }
  return "full";
}

std::string_view variant_name(VariantChoice v) {
  switch (v) {
    case VariantChoice::Auto: return "auto";
    case VariantChoice::Plain: return "plain";
    case VariantChoice::Semicoarsen: return "semicoarsen";
    case VariantChoice::Rescaled: return "rescaled";
    case VariantChoice::Jacobi: return "jacobi";
  }
  return "auto";
}

VariantChoice variant_from(const std::string& s, const std::string& path) {
  if (s == "auto") return VariantChoice::Auto;
  if (s == "plain") return VariantChoice::Plain;
  if (s == "semicoarsen") return VariantChoice::Semicoarsen;
  if (s == "rescaled") return VariantChoice::Rescaled;
  if (s == "jacobi") return VariantChoice::Jacobi;
  fail(path, "unknown variant '" + s + "' (auto, plain, semicoarsen, rescaled, jacobi)");
}

int auto_s(const discretize::EquationSpec& eq) {
  if (eq.kind != EquationKind::AnisotropicPoisson2D) return 1;
  return eq.param("eps") <= 10.0 ? 1 : 2;
}

void parse_optimizer(const json& j, ExperimentConfig& cfg) {
  const std::string path = "$.optimizer";
  if (!j.is_object()) fail(path, "expected an object");
  reject_unknown(j, path,
                 {"loss", "m", "k", "n_batch", "epochs", "n_inner", "lr_theta", "lr_omega", "beta1",
                  "beta2", "eps_adam", "theta", "resample", "verify_every"});
  auto& lc = cfg.loss;
  if (j.contains("loss")) {
    const auto s = get_string(j["loss"], path + ".loss");
    if (s == "L1") {
      lc.loss = optimize::LossKind::L1;
    } else if (s == "L2") {
      lc.loss = optimize::LossKind::L2;
    } else {
      fail(path + ".loss", "expected \"L1\" or \"L2\"");
    }
  }
  auto positive_int = [&](const char* key, int& dst) {
    if (!j.contains(key)) return;
    const auto v = get_int(j[key], path + "." + key);
    if (v < 1 || v > 1000000) fail(path + "." + key, "must be a positive integer");
    dst = static_cast<int>(v);
  };
  positive_int("m", lc.estimator.m);
  if (lc.estimator.m > 3) fail(path + ".m", "must be 1, 2 or 3");
  positive_int("k", lc.estimator.k);
  positive_int("n_batch", lc.estimator.n_batch);
  if (j.contains("epochs")) {
    const auto v = get_int(j["epochs"], path + ".epochs");
    if (v < 0 || v > 10000000) fail(path + ".epochs", "must be a nonnegative integer");
    lc.n_epochs = static_cast<int>(v);
  }
  positive_int("n_inner", lc.n_inner);
  positive_int("verify_every", lc.verify_every);
  auto nonneg = [&](const char* key, double& dst) {
    if (!j.contains(key)) return;
    dst = get_number(j[key], path + "." + key);
    if (dst < 0.0) fail(path + "." + key, "must be nonnegative");
  };
  nonneg("lr_theta", lc.lr_theta);
  nonneg("lr_omega", lc.lr_omega);
  nonneg("beta1", lc.adam.beta1);
  nonneg("beta2", lc.adam.beta2);
  nonneg("eps_adam", lc.adam.eps);
  if (lc.adam.beta1 >= 1.0) fail(path + ".beta1", "must be < 1");
  if (lc.adam.beta2 >= 1.0) fail(path + ".beta2", "must be < 1");
  if (lc.adam.eps <= 0.0) fail(path + ".eps_adam", "must be positive");
  if (j.contains("theta") && !j["theta"].is_null()) {
    lc.theta = get_number(j["theta"], path + ".theta");
    if (lc.theta <= 0.0) fail(path + ".theta", "must be positive (omit it for the automatic choice)");
  }
  if (j.contains("resample")) lc.resample = get_bool(j["resample"], path + ".resample");
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) fail("$", "expected an object");
  reject_unknown(j, "$",
                 {"kind", "L", "params", "variant", "bc", "mode", "seed", "output",
                  "allow_semicoarsen", "optimizer"});
  ExperimentConfig cfg;
  if (!j.contains("kind")) fail("$.kind", "missing");
  try {
    cfg.equation.kind = discretize::kind_from_string(get_string(j["kind"], "$.kind"));
  } catch (const UnsupportedParams& e) {
    fail("$.kind", e.what());
  }
  const int dim = discretize::dimension(cfg.equation.kind);

  if (!j.contains("L")) fail("$.L", "missing");
  const auto& jl = j["L"];
  if (jl.is_array()) {
    if (jl.empty()) fail("$.L", "empty level list");
    for (std::size_t i = 0; i < jl.size(); ++i) {
      cfg.levels.push_back(static_cast<int>(get_int(jl[i], "$.L[" + std::to_string(i) + "]")));
    }
  } else {
    cfg.levels.push_back(static_cast<int>(get_int(jl, "$.L")));
  }
  const int top = dim == 1 ? 8 : 6;
  for (int l : cfg.levels) {
    if (l < 2 || l > top) {
      fail("$.L", "level " + std::to_string(l) + " outside [2, " + std::to_string(top) + "] for " +
                      std::to_string(dim) + "D");
    }
  }

  if (j.contains("params")) {
    const auto& jp = j["params"];
    if (!jp.is_object()) fail("$.params", "expected an object");
    for (const auto& [key, value] : jp.items()) {
      const std::string path = "$.params." + key;
      try {
        if (value.is_number()) {
          cfg.equation.params[key] = {get_number(value, path), 0};
        } else if (value.is_string()) {
          cfg.equation.params[key] = discretize::ParamValue::parse(value.get<std::string>());
        } else {
          fail(path, "expected a number or an h-expression string");
        }
      } catch (const UnsupportedParams& e) {
        fail(path, e.what());
      }
    }
  }
  for (int l : cfg.levels) {
    auto eq = cfg.equation;
    eq.levels = l;
    try {
      eq.validate();
    } catch (const Error& e) {
      fail("$.params", e.what());
    }
  }

  if (j.contains("variant")) {
    const auto& jv = j["variant"];
    if (jv.is_string()) {
      cfg.variant = variant_from(jv.get<std::string>(), "$.variant");
      if (cfg.variant == VariantChoice::Semicoarsen) cfg.s = auto_s(cfg.equation);
    } else if (jv.is_object()) {
      reject_unknown(jv, "$.variant", {"kind", "s", "strong_axis", "other_axis"});
      if (!jv.contains("kind")) fail("$.variant.kind", "missing");
      cfg.variant = variant_from(get_string(jv["kind"], "$.variant.kind"), "$.variant.kind");
      cfg.s = auto_s(cfg.equation);
      if (jv.contains("s")) {
        const auto s = get_int(jv["s"], "$.variant.s");
        if (s < 0 || s > 8) fail("$.variant.s", "must lie in [0, 8]");
        cfg.s = static_cast<int>(s);
      }
      if (jv.contains("strong_axis")) {
        const auto a = get_string(jv["strong_axis"], "$.variant.strong_axis");
        if (a != "x" && a != "y") fail("$.variant.strong_axis", "expected \"x\" or \"y\"");
        cfg.strong_axis = a == "x" ? bpx::Axis::X : bpx::Axis::Y;
      }
      if (jv.contains("other_axis")) {
        const auto o = get_string(jv["other_axis"], "$.variant.other_axis");
        if (o != "denser" && o != "clamped") fail("$.variant.other_axis", "expected \"denser\" or \"clamped\"");
        cfg.other_axis = o == "denser" ? bpx::OtherAxis::Denser : bpx::OtherAxis::Clamped;
      }
      if (cfg.variant != VariantChoice::Semicoarsen &&
          (jv.contains("s") || jv.contains("strong_axis") || jv.contains("other_axis"))) {
        fail("$.variant", "s/strong_axis/other_axis only apply to semicoarsen");
      }
    } else {
      fail("$.variant", "expected a string or an object");
    }
  }
  if (j.contains("allow_semicoarsen")) {
    cfg.allow_semicoarsen = get_bool(j["allow_semicoarsen"], "$.allow_semicoarsen");
  }
  if (cfg.variant == VariantChoice::Semicoarsen) {
    if (dim != 2) fail("$.variant", "semicoarsening needs a 2D equation");
    if (cfg.equation.kind != EquationKind::AnisotropicPoisson2D && !cfg.allow_semicoarsen) {
      fail("$.variant", "semicoarsening is limited to AnisotropicPoisson2D unless allow_semicoarsen is set");
    }
  }

  if (j.contains("bc")) {
    const auto bc = get_string(j["bc"], "$.bc");
    try {
      cfg.bc = bpx::bc_from_string(bc);
    } catch (const UnsupportedBC& e) {
      fail("$.bc", e.what());
    }
    if (cfg.bc != bpx::BoundaryCondition::DD) {
      fail("$.bc", "assembled operators use Dirichlet boundaries; only DD is supported");
    }
  }
  if (j.contains("mode")) {
    const auto m = get_string(j["mode"], "$.mode");
    if (m == "full") {
      cfg.mode = Mode::Full;
    } else if (m == "scales_only") {
      cfg.mode = Mode::ScalesOnly;
    } else if (m == "baseline_only") {
      cfg.mode = Mode::BaselineOnly;
    } else {
      fail("$.mode", "expected full, scales_only or baseline_only");
    }
  }
  if (j.contains("seed")) {
    const auto& js = j["seed"];
    if (!js.is_number_unsigned() && !(js.is_number_integer() && js.get<long long>() >= 0)) {
      fail("$.seed", "expected a nonnegative integer");
    }
    cfg.seed = js.get<std::uint64_t>();
  }
  if (j.contains("output")) cfg.output = get_string(j["output"], "$.output");
  if (j.contains("optimizer")) parse_optimizer(j["optimizer"], cfg);

  cfg.loss.estimator.seed = cfg.seed;
  cfg.loss.selection =
      cfg.mode == Mode::ScalesOnly ? bpx::ParamSelection::ScalesOnly : bpx::ParamSelection::Full;
  const bool symmetric = cfg.equation.kind != EquationKind::ConvectionDiffusion2D;
  if (!symmetric && cfg.loss.loss == optimize::LossKind::L2) {
    fail("$.optimizer.loss", "L2 requires a symmetric operator; ConvectionDiffusion2D supports L1 only");
  }
  if (!symmetric && (cfg.variant == VariantChoice::Rescaled || cfg.variant == VariantChoice::Jacobi)) {
    fail("$.variant", "rescaled and jacobi variants need a symmetric operator");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_json(path));
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["kind"] = std::string(discretize::to_string(cfg.equation.kind));
  j["L"] = cfg.levels;
  json params = json::object();
  for (const auto& [key, value] : cfg.equation.params) {
    if (value.h_power == 0) {
      params[key] = value.coef;
    } else {
      params[key] = value.to_string();
    }
  }
  j["params"] = params;
  json v{{"kind", std::string(variant_name(cfg.variant))}};
  if (cfg.variant == VariantChoice::Semicoarsen) {
    v["s"] = cfg.s;
    v["strong_axis"] = cfg.strong_axis == bpx::Axis::X ? "x" : "y";
    v["other_axis"] = cfg.other_axis == bpx::OtherAxis::Denser ? "denser" : "clamped";
  }
  j["variant"] = v;
  j["allow_semicoarsen"] = cfg.allow_semicoarsen;
  j["bc"] = std::string(bpx::to_string(cfg.bc));
  j["mode"] = std::string(mode_name(cfg.mode));
  j["seed"] = cfg.seed;
  j["output"] = cfg.output.string();
  const auto& lc = cfg.loss;
  json o;
  o["loss"] = lc.loss == optimize::LossKind::L1 ? "L1" : "L2";
  o["m"] = lc.estimator.m;
  o["k"] = lc.estimator.k;
  o["n_batch"] = lc.estimator.n_batch;
  o["epochs"] = lc.n_epochs;
  o["n_inner"] = lc.n_inner;
  o["lr_theta"] = lc.lr_theta;
  o["lr_omega"] = lc.lr_omega;
  o["beta1"] = lc.adam.beta1;
  o["beta2"] = lc.adam.beta2;
  o["eps_adam"] = lc.adam.eps;
  o["theta"] = lc.theta > 0.0 ? json(lc.theta) : json(nullptr);
  o["resample"] = lc.resample;
  o["verify_every"] = lc.verify_every;
  j["optimizer"] = o;
  return j;
}

bpx::Variant resolve_variant(const ExperimentConfig& cfg) {
  switch (cfg.variant) {
    case VariantChoice::Plain:
    case VariantChoice::Jacobi:
      return bpx::Variant::plain();
    case VariantChoice::Rescaled:
      return bpx::Variant::rescaled();
    case VariantChoice::Semicoarsen:
      return bpx::Variant::semicoarsen(cfg.s, cfg.strong_axis, cfg.other_axis);
    case VariantChoice::Auto:
      break;
  }
  switch (cfg.equation.kind) {
    case EquationKind::DiscontinuousDiffusion2D:
      return bpx::Variant::rescaled();
    case EquationKind::AnisotropicPoisson2D:
      return bpx::Variant::semicoarsen(auto_s(cfg.equation), bpx::Axis::Y, bpx::OtherAxis::Denser);
    default:
      return bpx::Variant::plain();
  }
}

std::string variant_tag(const ExperimentConfig& cfg) {
  auto tag = bpx::to_string(resolve_variant(cfg));
  if (cfg.variant == VariantChoice::Jacobi) tag = "jacobi+" + tag;
  return tag;
}

// ------------------------------------------------------------------- runs

namespace {

struct Setup {
  SparseOperator a;
  optimize::Problem problem;
  int dim = 1;
  bool symmetric = true;
};

std::unique_ptr<Setup> make_setup(const ExperimentConfig& cfg, int levels) {
  auto eq = cfg.equation;
  eq.levels = levels;
  auto s = std::make_unique<Setup>();
  s->a = discretize::assemble(eq);
  if (cfg.variant == VariantChoice::Jacobi) s->a = s->a.jacobi_scaled();
  s->dim = discretize::dimension(eq.kind);
  s->symmetric = s->a.symmetric();
  s->problem.a = &s->a;
  s->problem.variant = resolve_variant(cfg);
  s->problem.bc = cfg.bc;
  if (s->problem.variant.kind == bpx::Variant::Kind::Rescaled) {
    s->problem.rescale = bpx::rescale_diagonals(s->a, levels, s->dim, cfg.bc);
  }
  return s;
}

Columns from_report(const spectral::SpectralReport& r) {
  return {r.rho, r.kappa, r.iterations, r.lambda_min, r.lambda_max};
}

Columns from_rho(double rho) {
  Columns c;
  c.rho = rho;
  c.n = rho < 1.0 ? spectral::iterations_for(rho) : 0;
  return c;
}

Columns evaluate(const Setup& s, const bpx::BpxParams& params, std::uint64_t seed) {
  if (s.symmetric) return from_report(optimize::verified_report(s.problem, params));
  const double theta0 = optimize::initial_theta(s.problem, params, seed);
  return from_rho(optimize::best_theta(s.problem, params, optimize::report_estimator(seed), theta0).rho);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ReportRow run_baseline(const ExperimentConfig& cfg, int levels) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = make_setup(cfg, levels);
  // Semicoarsened runs are compared against plain BPX.
  if (s->problem.variant.kind == bpx::Variant::Kind::Semicoarsen) s->problem.variant = bpx::Variant::plain();
  ReportRow row;
  row.equation = std::string(discretize::to_string(cfg.equation.kind));
  row.levels = levels;
  row.variant = variant_tag(cfg);
  row.seed = cfg.seed;
  row.baseline = evaluate(*s, bpx::classical_params(levels, s->dim), cfg.seed);
  row.wall_seconds = seconds_since(t0);
  return row;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, int levels) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult res;
  res.row = run_baseline(cfg, levels);
  res.directory = cfg.output / (res.row.equation + "_L" + std::to_string(levels));

  auto single = cfg;
  single.levels = {levels};
  json manifest{{"version", kVersion}, {"config", config_to_json(single)}, {"L", levels},
                {"seed", cfg.seed}, {"variant", res.row.variant}};

  if (cfg.mode != Mode::BaselineOnly) {
    const auto s = make_setup(cfg, levels);
    const auto init = bpx::classical_params(levels, s->dim);
    res.run = optimize::run(s->problem, init, cfg.loss);
    res.row.optimized = s->symmetric ? evaluate(*s, res.run.params, cfg.seed) : from_rho(res.run.best_score);

    io::save_params(res.run.params, res.directory / "params.json");
    io::write_history_csv(res.run.history, res.directory / "history.csv");
    io::Checkpoint ck;
    ck.epoch = res.run.best_epoch;
    ck.theta = res.run.theta;
    ck.params = res.run.params;
    if (!res.run.history.empty()) {
      const auto idx = static_cast<std::size_t>(std::max(res.run.best_epoch, 1) - 1);
      ck.loss = res.run.history[std::min(idx, res.run.history.size() - 1)].loss;
    }
    if (s->symmetric) ck.kappa_verified = res.row.optimized->kappa;
    io::write_json(io::checkpoint_to_json(ck), res.directory / "checkpoint.json");
    manifest["best_epoch"] = res.run.best_epoch;
    manifest["aborted"] = res.run.aborted;
    if (res.run.aborted) manifest["abort_reason"] = res.run.abort_reason;
  }
  res.row.wall_seconds = seconds_since(t0);
  manifest["wall_seconds"] = res.row.wall_seconds;
  io::write_json(manifest, res.directory / "manifest.json");
  return res;
}

std::vector<ReportRow> run_all(const ExperimentConfig& cfg) {
  std::vector<ReportRow> rows;
  for (int l : cfg.levels) {
    rows.push_back(cfg.mode == Mode::BaselineOnly ? run_baseline(cfg, l) : run_experiment(cfg, l).row);
  }
  return rows;
}

// ------------------------------------------------------------------ tables

TableFormat format_from_string(std::string_view s) {
  if (s == "csv") return TableFormat::Csv;
  if (s == "md" || s == "markdown") return TableFormat::Markdown;
  throw ConfigError("unknown table format '" + std::string(s) + "' (csv or md)");
}

namespace {

constexpr const char* kCsvHeader =
    "L,baseline_rho,baseline_kappa,baseline_N,optimized_rho,optimized_kappa,optimized_N,equation,"
    "variant,seed,wall_seconds";

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

std::vector<std::string> columns_text(const std::optional<Columns>& c, bool md) {
  if (!c) return {md ? "-" : "", md ? "-" : "", md ? "-" : ""};
  return {fixed3(c->rho), c->kappa ? fixed3(*c->kappa) : (md ? "-" : ""), std::to_string(c->n)};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("table: cannot parse " + what + " '" + s + "'");
  }
}

}  // namespace

std::string render_table(const std::vector<ReportRow>& rows, TableFormat format) {
  std::ostringstream out;
  if (format == TableFormat::Csv) {
    out << kCsvHeader << '\n';
    for (const auto& r : rows) {
      const auto b = columns_text(r.baseline, false);
      const auto o = columns_text(r.optimized, false);
      char wall[64];
      std::snprintf(wall, sizeof wall, "%.2f", r.wall_seconds);
      out << r.levels << ',' << b[0] << ',' << b[1] << ',' << b[2] << ',' << o[0] << ',' << o[1] << ','
          << o[2] << ',' << csv_field(r.equation) << ',' << csv_field(r.variant) << ',' << r.seed << ','
          << wall << '\n';
    }
    return out.str();
  }
  out << "| L | baseline ρ | baseline κ | baseline N | optimized ρ | optimized κ | optimized N | "
         "equation | variant |\n";
  out << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    const auto b = columns_text(r.baseline, true);
    const auto o = columns_text(r.optimized, true);
    out << "| " << r.levels << " | " << b[0] << " | " << b[1] << " | " << b[2] << " | " << o[0] << " | "
        << o[1] << " | " << o[2] << " | " << md_cell(r.equation) << " | " << md_cell(r.variant) << " |\n";
  }
  return out.str();
}

void emit_table(const std::vector<ReportRow>& rows, TableFormat format,
                const std::filesystem::path& path) {
  io::write_text(render_table(rows, format), path);
}

std::vector<ReportRow> parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ConfigError("table: unexpected CSV header");
  }
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 11) throw ConfigError("table: expected 11 fields in '" + line + "'");
    ReportRow r;
    r.levels = static_cast<int>(parse_double(f[0], "L"));
    r.baseline.rho = parse_double(f[1], "baseline_rho");
    if (!f[2].empty()) r.baseline.kappa = parse_double(f[2], "baseline_kappa");
    r.baseline.n = static_cast<int>(parse_double(f[3], "baseline_N"));
    if (!f[4].empty()) {
      Columns c;
      c.rho = parse_double(f[4], "optimized_rho");
      if (!f[5].empty()) c.kappa = parse_double(f[5], "optimized_kappa");
      c.n = static_cast<int>(parse_double(f[6], "optimized_N"));
      r.optimized = c;
    }
    r.equation = f[7];
    r.variant = f[8];
    r.seed = static_cast<std::uint64_t>(std::stoull(f[9]));
    r.wall_seconds = parse_double(f[10], "wall_seconds");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ReportRow> load_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_table_csv(ss.str());
}

// ------------------------------------------------------------------ verify

namespace {

bpx::BpxParams random_params(int levels, int dim, Philox& rng, double amp) {
  auto p = bpx::classical_params(levels, dim);
  auto flat = bpx::flatten(p, bpx::ParamSelection::Full);
  for (auto& x : flat) x += amp * rng.next_normal();
  bpx::unflatten(flat, p, bpx::ParamSelection::Full);
  return p;
}

double lambda_min_of(const bpx::Preconditioner& b) {
  return spectral::exact_extreme_eigs(b.as_map()).lambda_min;
}

Check check(std::string name, bool ok, std::string detail) {
  return {std::move(name), ok, std::move(detail)};
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

}  // namespace

std::vector<Check> verify_suite(const VerifyOptions& opts) {
  std::vector<Check> out;
  Philox rng(opts.seed, 0x7e57);
  const int draws = std::max(opts.draws, 1);

  {
    std::vector<discretize::EquationSpec> specs;
    for (int l : {3, 4}) {
      specs.push_back({EquationKind::Poisson1D, l, {}});
      specs.push_back({EquationKind::Poisson2D, l, {}});
      specs.push_back({EquationKind::Mehrstellen2D, l, {}});
      specs.push_back({EquationKind::Helmholtz2D, l, {{"k2h", {0.1, 0}}}});
      specs.push_back({EquationKind::AnisotropicPoisson2D, l, {{"eps", {100, 0}}}});
      specs.push_back({EquationKind::Biharmonic2D, l, {}});
      specs.push_back({EquationKind::DiscontinuousDiffusion2D, l, {{"sigma", {100, 0}}}});
      specs.push_back({EquationKind::MixedDerivative2D, l, {{"tau", {0.9, 0}}}});
      specs.push_back({EquationKind::CrankNicolson2D, l, {{"mu", {0.5, 1}}}});
    }
    double worst = INFINITY;
    std::string which;
    for (const auto& s : specs) {
      const auto r = discretize::spd_check(discretize::assemble(s));
      if (r.lambda_min < worst) {
        worst = r.lambda_min;
        which = std::string(discretize::to_string(s.kind)) + " L=" + std::to_string(s.levels);
      }
    }
    out.push_back(check("spd_assembly", worst > 0.0,
                        "smallest lambda_min " + fmt("%.3e", worst) + " (" + which + ")"));
  }

  {
    double worst = INFINITY;
    for (int d = 1; d <= 2; ++d) {
      for (int i = 0; i < draws; ++i) {
        worst = std::min(worst, lambda_min_of(bpx::Preconditioner(random_params(3, d, rng, 0.5))));
      }
    }
    if (opts.params) worst = std::min(worst, lambda_min_of(bpx::Preconditioner(*opts.params)));
    out.push_back(check("preconditioner_spd", worst >= 1.0 - 1e-12,
                        "min lambda_min(B) " + fmt("%.15f", worst)));
  }

  {
    const auto p = opts.params ? *opts.params : bpx::classical_params(3, 1);
    bool ok = true;
    std::string detail = "all columns within 2*2^(L-l)-1";
    for (int l = 1; l < p.levels; ++l) {
      const auto f = bpx::build_factor(l, p, bpx::BoundaryCondition::DD);
      const std::size_t bound = 2 * p.block(l) - 1;
      const std::size_t got = bpx::max_column_support(f);
      if (got > bound) {
        ok = false;
        detail = "level " + std::to_string(l) + ": column support " + std::to_string(got) + " > " +
                 std::to_string(bound);
        break;
      }
    }
    out.push_back(check("support_bound", ok, detail));
  }

  const auto a1 = discretize::poisson_1d(3);
  optimize::Problem p1;
  p1.a = &a1;
  {
    double worst = 0.0;
    for (int i = 0; i < draws; ++i) {
      const auto p = random_params(3, 1, rng, 0.3);
      const auto rep = optimize::verified_report(p1, p);
      worst = std::max(worst, std::abs(optimize::loss_L2_exact(p1, p) - (1.0 - 1.0 / rep.kappa)));
    }
    out.push_back(check("l2_exact_identity", worst <= 1e-10, "max |L2 - (1 - 1/kappa)| " + fmt("%.3e", worst)));
  }

  {
    const auto p = random_params(3, 1, rng, 0.3);
    const auto rep = optimize::verified_report(p1, p);
    const auto b = p1.make(p);
    const int grid = 400;
    const double top = 2.0 / rep.lambda_max;
    double best = INFINITY;
    for (int i = 1; i <= grid; ++i) {
      const double theta = top * i / grid;
      const auto e = spectral::exact_extreme_eigs(optimize::iteration_map(b, a1, 1.0, theta));
      best = std::min(best, std::max(std::abs(e.lambda_min), std::abs(e.lambda_max)));
    }
    // rho(theta) has slope at most lambda_max near the optimum.
    const double tol = rep.lambda_max * top / grid;
    out.push_back(check("richardson_optimum", std::abs(best - rep.rho) <= tol,
                        "grid min " + fmt("%.6f", best) + " vs (k-1)/(k+1) " + fmt("%.6f", rep.rho)));
  }

  {
    double worst1 = 0.0, worst2 = 0.0;
    const int n = std::min(draws, 5);
    for (int i = 0; i < n; ++i) {
      const auto p = random_params(3, 1, rng, 0.2);
      spectral::EstimatorConfig cfg{1 + i % 3, 10, 10, opts.seed + static_cast<std::uint64_t>(i), 0, 0};
      const double theta = optimize::initial_theta(p1, p, opts.seed);
      worst1 = std::max(worst1, optimize::fd_check(p1, p, theta, cfg, optimize::LossKind::L1).max_rel_error);
      worst2 = std::max(worst2, optimize::fd_check(p1, p, theta, cfg, optimize::LossKind::L2).max_rel_error);
    }
    out.push_back(check("gradient_L1", worst1 <= 1e-5, "max relative error " + fmt("%.3e", worst1)));
    out.push_back(check("gradient_L2", worst2 <= 1e-4, "max relative error " + fmt("%.3e", worst2)));
  }

  {
    double worst = 0.0;
    bool deterministic = true;
    const std::size_t n = 16;
    for (int t = 0; t < 5; ++t) {
      std::vector<double> g(n * n), a(n * n, 0.0);
      for (auto& x : g) x = rng.next_normal();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = i == j ? 0.1 : 0.0;
          for (std::size_t r = 0; r < n; ++r) s += g[r * n + i] * g[r * n + j];
          a[i * n + j] = s;
        }
      }
      const LinearMap op{n, [&a, n](std::span<const double> x, std::span<double> y) {
                           for (std::size_t i = 0; i < n; ++i) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * x[j];
                             y[i] = s;
                           }
                         }};
      const double top = spectral::exact_extreme_eigs(op).lambda_max;
      spectral::EstimatorConfig cfg{1, 500, 10, opts.seed + static_cast<std::uint64_t>(t), 0, 0};
      const double r1 = spectral::rho1(op, cfg);
      const double r3 = spectral::rho3(op, cfg);
      worst = std::max({worst, std::abs(r1 - top) / top, std::abs(r3 - top) / top});
      deterministic = deterministic && r1 == spectral::rho1(op, cfg) && r3 == spectral::rho3(op, cfg);
    }
    out.push_back(check("estimator_consistency", worst <= 0.05 && deterministic,
                        "max relative deviation " + fmt("%.3e", worst) +
                            (deterministic ? ", deterministic" : ", NOT deterministic")));
  }

  {
    bool rejected_run = false;
    bool rejected_config = false;
    discretize::EquationSpec spec{EquationKind::ConvectionDiffusion2D, 3, {{"vx", {1, -1}}, {"vy", {-1, -1}}}};
    const auto a = discretize::assemble(spec);
    optimize::Problem p;
    p.a = &a;
    optimize::LossConfig cfg;
    cfg.loss = optimize::LossKind::L2;
    cfg.n_epochs = 1;
    try {
      optimize::run(p, bpx::classical_params(3, 2), cfg);
    } catch (const NotSymmetric&) {
      rejected_run = true;
    }
    try {
      parse_config(json{{"kind", "ConvectionDiffusion2D"}, {"L", 3}, {"params", {{"vx", "1/h"}, {"vy", "-1/h"}}},
                        {"optimizer", {{"loss", "L2"}}}});
    } catch (const ConfigError&) {
      rejected_config = true;
    }
    out.push_back(check("routing", rejected_run && rejected_config,
                        std::string("nonsymmetric operator with L2: run ") +
                            (rejected_run ? "rejected" : "accepted") + ", config " +
                            (rejected_config ? "rejected" : "accepted")));
  }
  return out;
}

}  // namespace optbpx::harness
