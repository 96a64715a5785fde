#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "optbpx/error.hpp"
#include "optbpx/harness.hpp"
#include "optbpx/io.hpp"

using namespace optbpx;
using namespace optbpx::harness;
using json = nlohmann::ordered_json;

namespace {

std::string config_error(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path tmp(const std::string& name) {
  auto p = std::filesystem::path(OPTBPX_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("minimal config gets defaults") {
  const auto c = parse_config(json{{"kind", "Poisson1D"}, {"L", 3}});
  CHECK(c.levels == std::vector<int>{3});
  CHECK(c.loss.estimator.m == 3);
  CHECK(c.loss.estimator.k == 10);
  CHECK(c.loss.estimator.n_batch == 10);
  CHECK(c.loss.n_epochs == 500);
  CHECK(c.loss.n_inner == 1);
  CHECK(c.loss.loss == optimize::LossKind::L1);
  CHECK(c.mode == Mode::Full);
  CHECK(variant_tag(c) == "plain");
}

TEST_CASE("config errors carry the field path") {
  CHECK(config_error(json{{"kind", "Poisson1D"}, {"L", 3}, {"colour", 1}}).starts_with("$.colour: unknown field"));
  CHECK(config_error(json{{"kind", "Poisson1D"}, {"L", 3}, {"optimizer", {{"kk", 1}}}})
            .starts_with("$.optimizer.kk"));
  CHECK(config_error(json{{"kind", "Poisson1D"}, {"L", 3}, {"optimizer", {{"k", 0}}}})
            .starts_with("$.optimizer.k"));
  CHECK(config_error(json{{"kind", "Poisson2D"}, {"L", 3}, {"params", {{"eps", 10}}}}).starts_with("$.params"));
  CHECK(config_error(json{{"kind", "Poisson2D"}, {"L", 7}}).starts_with("$.L"));
  CHECK(config_error(json{{"kind", "Poisson1D"}, {"L", {3, "x"}}}).starts_with("$.L[1]"));
  CHECK(config_error(json{{"kind", "Heat"}, {"L", 3}}).starts_with("$.kind"));
  CHECK(config_error(json{{"L", 3}}).starts_with("$.kind: missing"));
  CHECK(config_error(json{{"kind", "Poisson1D"}, {"L", 3}, {"bc", "DN"}}).starts_with("$.bc"));
  CHECK(config_error(json{{"kind", "ConvectionDiffusion2D"},
                          {"L", 3},
                          {"params", {{"vx", "1/h"}, {"vy", "-1/h"}}},
                          {"optimizer", {{"loss", "L2"}}}})
            .starts_with("$.optimizer.loss"));
  CHECK(config_error(json{{"kind", "Poisson2D"}, {"L", 3}, {"variant", "semicoarsen"}}).starts_with("$.variant"));
  CHECK(config_error(json{{"kind", "Poisson2D"}, {"L", 3}, {"variant", "semicoarsen"}, {"allow_semicoarsen", true}})
            .empty());
}

TEST_CASE("config round trip and variant routing") {
  const auto c = parse_config(json{{"kind", "AnisotropicPoisson2D"},
                                   {"L", {3, 4}},
                                   {"params", {{"eps", 1000}}},
                                   {"seed", 5},
                                   {"mode", "scales_only"},
                                   {"optimizer", {{"loss", "L2"}, {"epochs", 20}, {"theta", 0.3}}}});
  CHECK(variant_tag(c) == "semicoarsen(s=2,y,denser)");
  CHECK(c.loss.selection == bpx::ParamSelection::ScalesOnly);
  CHECK(c.loss.estimator.seed == 5);
  const auto j = config_to_json(c);
  CHECK(config_to_json(parse_config(j)) == j);

  const auto ten = parse_config(json{{"kind", "AnisotropicPoisson2D"}, {"L", 3}, {"params", {{"eps", 10}}}});
  CHECK(resolve_variant(ten).s == 1);
  const auto disc = parse_config(json{{"kind", "DiscontinuousDiffusion2D"}, {"L", 3}, {"params", {{"sigma", 10}}}});
  CHECK(resolve_variant(disc).kind == bpx::Variant::Kind::Rescaled);
  const auto clamped = parse_config(json{{"kind", "AnisotropicPoisson2D"},
                                         {"L", 3},
                                         {"params", {{"eps", 100}}},
                                         {"variant", {{"kind", "semicoarsen"}, {"s", 1}, {"other_axis", "clamped"}}}});
  CHECK(variant_tag(clamped) == "semicoarsen(s=1,y,clamped)");
  const auto cn = parse_config(json{{"kind", "CrankNicolson2D"}, {"L", 3}, {"params", {{"mu", "h/2"}}}});
  CHECK(config_to_json(cn)["params"]["mu"] == "0.5*h");
}

TEST_CASE("baselines") {
  auto c = parse_config(json{{"kind", "Poisson2D"}, {"L", 4}});
  auto r = run_baseline(c, 4);
  CHECK(r.baseline.kappa.value() == doctest::Approx(5.678).epsilon(5e-4));
  CHECK(r.baseline.rho == doctest::Approx(0.701).epsilon(1e-3));
  CHECK(r.baseline.n == 7);
  c = parse_config(json{{"kind", "Poisson1D"}, {"L", 8}});
  CHECK(run_baseline(c, 8).baseline.kappa.value() == doctest::Approx(9.456).epsilon(5e-4));
  c = parse_config(json{{"kind", "AnisotropicPoisson2D"}, {"L", 4}, {"params", {{"eps", 100}}}, {"variant", "plain"}});
  CHECK(run_baseline(c, 4).baseline.kappa.value() == doctest::Approx(216.104).epsilon(5e-4));
  c = parse_config(json{{"kind", "AnisotropicPoisson2D"}, {"L", 3}, {"params", {{"eps", 1000}}}});
  const auto routed = run_baseline(c, 3);
  CHECK(routed.variant == "semicoarsen(s=2,y,denser)");
  CHECK(routed.baseline.kappa.value() == doctest::Approx(118.948).epsilon(5e-4));
}

TEST_CASE("table rendering") {
  ReportRow row;
  row.equation = "Poisson1D";
  row.levels = 3;
  row.variant = "semicoarsen(s=2,y,denser)";
  row.baseline = {0.61084, 4.13807, 5, 1.0, 4.13807};
  row.optimized = Columns{0.33163, 1.99275, 3, {}, {}};
  row.seed = 1;
  row.wall_seconds = 1.234;
  CHECK(render_table({row}, TableFormat::Csv) ==
        "L,baseline_rho,baseline_kappa,baseline_N,optimized_rho,optimized_kappa,optimized_N,equation,variant,seed,"
        "wall_seconds\n"
        "3,0.611,4.138,5,0.332,1.993,3,Poisson1D,\"semicoarsen(s=2,y,denser)\",1,1.23\n");
  CHECK(render_table({row}, TableFormat::Markdown) ==
        "| L | baseline ρ | baseline κ | baseline N | optimized ρ | optimized κ | optimized N | equation | variant |\n"
        "|---|---|---|---|---|---|---|---|---|\n"
        "| 3 | 0.611 | 4.138 | 5 | 0.332 | 1.993 | 3 | Poisson1D | semicoarsen(s=2,y,denser) |\n");
  row.variant = "a|b";
  CHECK(render_table({row}, TableFormat::Markdown).find("a\\|b") != std::string::npos);

  ReportRow conv;
  conv.equation = "ConvectionDiffusion2D";
  conv.levels = 4;
  conv.variant = "plain";
  conv.baseline = {0.741, {}, 8, {}, {}};
  const auto path = tmp("table") / "t.csv";
  emit_table({row, conv}, TableFormat::Csv, path);
  const auto back = load_table(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].variant == "a|b");
  CHECK(back[0].baseline.kappa.value() == 4.138);
  CHECK(back[0].optimized->kappa.value() == 1.993);
  CHECK_FALSE(back[1].baseline.kappa.has_value());
  CHECK_FALSE(back[1].optimized.has_value());
  CHECK(render_table(back, TableFormat::Csv) == render_table({row, conv}, TableFormat::Csv));
  CHECK(format_from_string("md") == TableFormat::Markdown);
  CHECK_THROWS_AS(format_from_string("xls"), ConfigError);
}

TEST_CASE("experiment outputs") {
  auto c = parse_config(json{{"kind", "Poisson1D"}, {"L", 3}, {"seed", 1}, {"optimizer", {{"epochs", 100}}}});
  c.output = tmp("exp");
  const auto res = run_experiment(c, 3);
  for (const char* f : {"params.json", "history.csv", "checkpoint.json", "manifest.json"})
    CHECK(std::filesystem::exists(res.directory / f));
  const auto p = io::load_params(res.directory / "params.json");
  CHECK(p.eta == res.run.params.eta);
  const auto ck = io::checkpoint_from_json(io::read_json(res.directory / "checkpoint.json"));
  CHECK(ck.kappa_verified.value() == doctest::Approx(res.row.optimized->kappa.value()));
  const auto manifest = io::read_json(res.directory / "manifest.json");
  CHECK(manifest["version"] == kVersion);
  CHECK(manifest["config"]["seed"] == 1);
  CHECK(res.row.optimized->kappa.value() < res.row.baseline.kappa.value());
}

TEST_CASE("Crank-Nicolson and convection experiments") {
  auto cn = parse_config(json{{"kind", "CrankNicolson2D"}, {"L", 3}, {"params", {{"mu", "h/2"}}}, {"seed", 1}});
  cn.output = tmp("cn");
  const auto r = run_experiment(cn, 3).row;
  CHECK(r.optimized->kappa.value() <= 1.5);

  auto cd = parse_config(
      json{{"kind", "ConvectionDiffusion2D"}, {"L", 3}, {"params", {{"vx", "1/h"}, {"vy", "-1/h"}}}, {"seed", 1}});
  cd.output = tmp("cd");
  const auto s = run_experiment(cd, 3).row;
  CHECK_FALSE(s.optimized->kappa.has_value());
  CHECK(s.optimized->rho <= 0.5);
  CHECK(s.optimized->rho < s.baseline.rho);
}

TEST_CASE("verify suite") {
  VerifyOptions opts;
  opts.draws = 5;
  for (const auto& c : verify_suite(opts)) {
    INFO(c.name << ": " << c.detail);
    CHECK(c.passed);
  }
  auto broken = bpx::classical_params(3, 1);
  broken.xi[1].back() = 0.4;
  opts.params = broken;
  bool spd = false, support = true;
  for (const auto& c : verify_suite(opts)) {
    if (c.name == "preconditioner_spd") spd = c.passed;
    if (c.name == "support_bound") support = c.passed;
  }
  CHECK(spd);
  CHECK_FALSE(support);
}

TEST_CASE("parameter json") {
  const auto p = bpx::classical_params(3, 2);
  const auto q = io::params_from_json(io::params_to_json(p));
  CHECK(q.alpha == p.alpha);
  CHECK(q.eta == p.eta);
  CHECK(q.xi == p.xi);
  CHECK_THROWS_AS(io::params_from_json(json{{"L", 3}}), ConfigError);
  auto bad = io::params_to_json(p);
  bad["eta"][0] = json::array({1.0});
  CHECK_THROWS_AS(io::params_from_json(bad), ConfigError);
}
