#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dtr/gcomp.hpp"
#include "dtr/io.hpp"
#include "dtr/mcmc.hpp"
#include "dtr/rules.hpp"
#include "dtr/simgen.hpp"

namespace py = pybind11;
using namespace dtr;

namespace {

SamplerConfig sampler_config_from_dict(const py::dict& d) {
  SamplerConfig c;
  for (auto item : d) {
    const std::string key = py::str(item.first);
    if (key == "iterations" || key == "M")
      c.iterations = item.second.cast<int>();
    else if (key == "burnin")
      c.burnin = item.second.cast<int>();
    else if (key == "thin")
      c.thin = item.second.cast<int>();
    else if (key == "alpha")
      c.alpha = item.second.cast<double>();
    else if (key == "beta_prior_var")
      c.beta_prior_var = item.second.cast<double>();
    else if (key == "intervals")
      c.intervals = item.second.cast<int>();
    else if (key == "halve_partition")
      c.halve_partition = item.second.cast<bool>();
    else if (key == "baseline")
      c.baseline = item.second.cast<std::string>() == "weibull"
                       ? BaselineFamily::weibull
                       : BaselineFamily::gamma_process;
    else if (key == "seed")
      c.seed = item.second.cast<std::uint64_t>();
    else if (key == "initial_step")
      c.initial_step = item.second.cast<double>();
    else
      throw ConfigError("unknown sampler option '" + key + "'");
  }
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gamma-process survival models and g-computation for multi-course "
            "treatment rules";

  py::register_exception<ParseError>(m, "ParseError");
  py::register_exception<ValidationError>(m, "DataValidationError");
  py::register_exception<ConfigError>(m, "ConfigurationError");

  py::class_<CovariateSchema>(m, "Schema")
      .def_static("from_file", &CovariateSchema::from_file, py::arg("path"))
      .def_static(
          "from_text",
          [](const std::string& text) {
            return CovariateSchema::from_keyvalues(KeyValueFile::from_string(text));
          },
          py::arg("text"))
      .def_property_readonly("courses", [](const CovariateSchema& s) { return s.K; })
      .def_property_readonly("covariates",
                             [](const CovariateSchema& s) {
                               std::vector<std::string> names;
                               for (const auto& c : s.covariates) names.push_back(c.name);
                               return names;
                             })
      .def("to_text", &CovariateSchema::to_text)
      .def("__repr__", [](const CovariateSchema& s) {
        return "<Schema K=" + std::to_string(s.K) + ", " +
               std::to_string(s.covariates.size()) + " covariates>";
      });

  py::class_<Cohort>(m, "Cohort")
      .def_static(
          "read",
          [](const std::filesystem::path& csv, const CovariateSchema& schema) {
            return ingest(csv, schema);
          },
          py::arg("csv"), py::arg("schema"))
      .def_static(
          "from_text",
          [](const std::string& text, const CovariateSchema& schema) {
            return ingest_text(text, schema);
          },
          py::arg("text"), py::arg("schema"))
      .def("write",
           [](const Cohort& c, const std::filesystem::path& path) {
             write_file_atomic(path, export_csv(c));
           })
      .def("to_csv", [](const Cohort& c) { return export_csv(c); })
      .def_property_readonly("schema", [](const Cohort& c) { return c.schema; })
      .def("__len__", [](const Cohort& c) { return c.subjects.size(); })
      .def("__repr__", [](const Cohort& c) {
        return "<Cohort n=" + std::to_string(c.subjects.size()) + ">";
      });

  py::class_<SimDesign>(m, "SimDesign")
      .def_static("default", &SimDesign::default_design)
      .def_static("from_file", &SimDesign::from_file, py::arg("path"))
      .def_readwrite("n", &SimDesign::n)
      .def("to_text", &SimDesign::to_text)
      .def("schema", &SimDesign::schema);

  m.def("simulate_cohort", &generate_cohort, py::arg("design"), py::arg("seed"),
        "Generate a synthetic observational cohort from the design");

  py::class_<DecisionRule>(m, "Rule")
      .def_static("parse", &parse_rule, py::arg("text"))
      .def_static("threshold",
                  [](double tau1, double tau2) {
                    return threshold_rule({tau1, tau2});
                  })
      .def_static("fixed", &fixed_rule)
      .def_static("assign_if_below", &assign_if_below)
      .def_property_readonly("name", [](const DecisionRule& r) { return r.name; })
      .def("__repr__", [](const DecisionRule& r) { return "<Rule " + r.name + ">"; });

  py::class_<DrawSet>(m, "Draws")
      .def_static("read", &read_draws_ndjson, py::arg("path"))
      .def(
          "write",
          [](const DrawSet& s, const std::filesystem::path& p) { write_draws_ndjson(p, s); },
          py::arg("path"))
      .def("__len__", [](const DrawSet& s) { return s.draws.size(); })
      .def_property_readonly("max_observed_death",
                             [](const DrawSet& s) { return s.meta.max_observed_death; })
      .def_property_readonly("schema", [](const DrawSet& s) { return s.meta.schema; });

  m.def(
      "fit",
      [](const Cohort& cohort, const py::dict& config) {
        const SamplerConfig cfg = sampler_config_from_dict(config);
        DrawSet set;
        set.meta = run_sampler(cohort, cfg,
                               [&](const ParameterDraw& d) { set.draws.push_back(d); });
        return set;
      },
      py::arg("cohort"), py::arg("config") = py::dict(),
      "Blocked Metropolis-in-Gibbs posterior sampling; returns the draws");

  m.def(
      "gcompute",
      [](const DrawSet& draws, const DecisionRule& rule, const std::vector<double>& grid,
         int B, double s, double t_ref, std::uint64_t seed, int threads,
         const std::string& feasible) {
        GCompConfig cfg;
        cfg.grid = grid;
        cfg.B = B;
        cfg.s = s;
        cfg.t_ref = t_ref;
        cfg.seed = seed;
        cfg.threads = threads;
        const FeasibleSet f = feasible == "noact3"
                                  ? FeasibleSet::no_act_course3(draws.meta.schema.K)
                                  : FeasibleSet::all(draws.meta.schema.K);
        const GCompResult res = estimate_survival(draws, rule, f, cfg);
        const CurveSummary sum = posterior_summary(res.psi, 0.05);
        py::dict out;
        out["grid"] = res.grid;
        out["psi"] = res.psi;
        out["phi"] = res.phi;
        out["utility"] = res.utility;
        out["extrapolated"] = res.extrapolated;
        out["mean"] = sum.mean;
        out["lower"] = sum.lower;
        out["upper"] = sum.upper;
        return out;
      },
      py::arg("draws"), py::arg("rule"), py::arg("grid"), py::arg("B") = 10000,
      py::arg("s") = 0.5, py::arg("t_ref") = 0.0, py::arg("seed") = 1, py::arg("threads") = 1,
      py::arg("feasible") = "all",
      "Per-draw Monte Carlo survival curves, adverse-event risk, and utility");

  m.def(
      "optimize",
      [](const DrawSet& draws, const std::vector<double>& tau1,
         const std::vector<double>& tau2, const std::string& objective, double t_ref, double s,
         int B, double alpha, std::uint64_t seed, int threads) {
        GCompConfig cfg;
        cfg.grid = {t_ref};
        cfg.t_ref = t_ref;
        cfg.s = s;
        cfg.B = B;
        cfg.seed = seed;
        cfg.threads = threads;
        const auto grid = rule_grid(tau1, tau2);
        const auto post = optimize_rule(
            draws, grid,
            objective == "utility" ? RuleObjective::utility : RuleObjective::survival,
            FeasibleSet::all(draws.meta.schema.K), cfg, alpha);
        py::dict out;
        std::vector<std::pair<double, double>> cells;
        for (const auto& tau : post.grid) cells.push_back({tau.tau1, tau.tau2});
        out["grid"] = cells;
        out["pmf"] = post.pmf;
        out["argmax"] = post.argmax;
        out["credible_set"] = post.credible_set;
        out["mode"] = std::make_pair(post.grid[post.mode_index].tau1,
                                     post.grid[post.mode_index].tau2);
        out["tied_draws"] = post.tied_draws;
        return out;
      },
      py::arg("draws"), py::arg("tau1"), py::arg("tau2"), py::arg("objective") = "survival",
      py::arg("t_ref") = 0.0, py::arg("s") = 0.5, py::arg("B") = 1000, py::arg("alpha") = 0.10,
      py::arg("seed") = 1, py::arg("threads") = 1,
      "Exhaustive threshold-rule search with a posterior over the argmax");

  m.def("hdi_set",
        [](const std::vector<double>& pmf, double level) { return hdi_set(pmf, level); },
        py::arg("pmf"), py::arg("level"),
        "Highest-mass cells reaching the level; ties at the cut included");

  m.def(
      "true_survival",
      [](const SimDesign& design, const DecisionRule& rule, const std::vector<double>& t,
         std::size_t n_mc, std::uint64_t seed) {
        const auto truth = true_survival(design, rule, t, n_mc, seed);
        py::dict out;
        out["t"] = truth.t;
        out["psi"] = truth.psi;
        out["se"] = truth.se;
        return out;
      },
      py::arg("design"), py::arg("rule"), py::arg("t"), py::arg("n_mc") = 1000000,
      py::arg("seed") = 1, "Ground-truth potential survival under the rule");

  // low-level hazard operations, mainly for cross-checking
  m.def("piecewise_survival",
        [](const std::vector<double>& knots, const std::vector<double>& rates, double w) {
          PiecewiseHazardModel hm;
          hm.partition = {knots};
          hm.rates = rates;
          return survival(hm, w, {});
        });
  m.def("piecewise_sample_waiting_time",
        [](const std::vector<double>& knots, const std::vector<double>& rates, double u) {
          PiecewiseHazardModel hm;
          hm.partition = {knots};
          hm.rates = rates;
          return sample_waiting_time(hm, {}, u);
        });
  m.def("encode_waiting_time",
        [](double w, const std::vector<double>& cuts) { return encode_waiting_time(w, cuts); });

  m.attr("__version__") = "0.1.0";
}
