#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "optbpx/bpx.hpp"
#include "optbpx/discretize.hpp"
#include "optbpx/error.hpp"
#include "optbpx/harness.hpp"
#include "optbpx/io.hpp"
#include "optbpx/optimize.hpp"
#include "optbpx/spectral.hpp"

namespace py = pybind11;
using json = nlohmann::ordered_json;
using namespace optbpx;

namespace {

py::array_t<double> square(const std::vector<double>& flat, std::size_t n) {
  py::array_t<double> out({n, n});
  std::copy(flat.begin(), flat.end(), out.mutable_data());
  return out;
}

json columns(const harness::Columns& c) {
  json j{{"rho", c.rho}, {"N", c.n}};
  j["kappa"] = c.kappa ? json(*c.kappa) : json(nullptr);
  return j;
}

std::string row_json(const harness::ReportRow& r) {
  json j{{"equation", r.equation}, {"L", r.levels},       {"variant", r.variant},
         {"seed", r.seed},         {"wall_seconds", r.wall_seconds}, {"baseline", columns(r.baseline)}};
  j["optimized"] = r.optimized ? columns(*r.optimized) : json(nullptr);
  return j.dump();
}

discretize::EquationSpec spec(const std::string& kind, int levels, const std::map<std::string, std::string>& params) {
  discretize::EquationSpec s;
  s.kind = discretize::kind_from_string(kind);
  s.levels = levels;
  for (const auto& [k, v] : params) s.params[k] = discretize::ParamValue::parse(v);
  s.validate();
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.attr("__version__") = harness::kVersion;

  static py::exception<Error> base(m, "OptbpxError", PyExc_RuntimeError);
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  static py::exception<IndefiniteOperator> indefinite(m, "IndefiniteOperator", base.ptr());
  static py::exception<NotSymmetric> nonsym(m, "NotSymmetric", base.ptr());
  static py::exception<UnsupportedParams> params(m, "UnsupportedParams", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config, e.what());
    } catch (const IndefiniteOperator& e) {
      py::set_error(indefinite, e.what());
    } catch (const NotSymmetric& e) {
      py::set_error(nonsym, e.what());
    } catch (const UnsupportedParams& e) {
      py::set_error(params, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def(
      "assemble",
      [](const std::string& kind, int levels, const std::map<std::string, std::string>& p) {
        const auto a = discretize::assemble(spec(kind, levels, p));
        return square(a.to_dense(), a.size());
      },
      py::arg("kind"), py::arg("L"), py::arg("params") = std::map<std::string, std::string>{});

  m.def(
      "classical_params",
      [](int levels, int dim) { return io::params_to_json(bpx::classical_params(levels, dim)).dump(); },
      py::arg("L"), py::arg("dim"));

  m.def(
      "preconditioner",
      [](const std::string& params_json) {
        const bpx::Preconditioner b(io::params_from_json(json::parse(params_json)));
        return square(b.dense(), b.size());
      },
      py::arg("params"));

  m.def(
      "estimate",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a, int method, int k, int batch,
         std::uint64_t seed) {
        if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw py::value_error("expected a square matrix");
        const auto n = static_cast<std::size_t>(a.shape(0));
        std::vector<double> d(a.data(), a.data() + n * n);
        const LinearMap op{n, [&d, n](std::span<const double> x, std::span<double> y) {
                             for (std::size_t i = 0; i < n; ++i) {
                               double s = 0.0;
                               for (std::size_t j = 0; j < n; ++j) s += d[i * n + j] * x[j];
                               y[i] = s;
                             }
                           }};
        spectral::EstimatorConfig cfg{method, k, batch, seed, 0, 0};
        cfg.validate();
        return spectral::estimate(op, cfg);
      },
      py::arg("matrix"), py::arg("m") = 3, py::arg("k") = 10, py::arg("batch") = 10, py::arg("seed") = 0);

  m.def(
      "report",
      [](double lmin, double lmax) {
        const auto r = spectral::report(lmin, lmax);
        return py::dict(py::arg("lambda_min") = r.lambda_min, py::arg("lambda_max") = r.lambda_max,
                        py::arg("kappa") = r.kappa, py::arg("rho") = r.rho, py::arg("N") = r.iterations);
      },
      py::arg("lambda_min"), py::arg("lambda_max"));

  m.def(
      "run_baseline",
      [](const std::string& config_json, int levels) {
        return row_json(harness::run_baseline(harness::parse_config(json::parse(config_json)), levels));
      },
      py::arg("config"), py::arg("L"));

  m.def(
      "run_experiment",
      [](const std::string& config_json, int levels) {
        py::gil_scoped_release release;
        const auto res = harness::run_experiment(harness::parse_config(json::parse(config_json)), levels);
        json j = json::parse(row_json(res.row));
        j["directory"] = res.directory.string();
        j["params"] = io::params_to_json(res.run.params);
        return j.dump();
      },
      py::arg("config"), py::arg("L"));

  m.def(
      "verify",
      [](std::uint64_t seed, int draws) {
        harness::VerifyOptions opts;
        opts.seed = seed;
        opts.draws = draws;
        py::list out;
        for (const auto& c : harness::verify_suite(opts)) out.append(py::make_tuple(c.name, c.passed, c.detail));
        return out;
      },
      py::arg("seed") = 0, py::arg("draws") = 20);
}
