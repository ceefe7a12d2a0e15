#include <algorithm>
#include <cctype>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dtr/gcomp.hpp"
#include "dtr/io.hpp"
#include "dtr/mcmc.hpp"
#include "dtr/rules.hpp"
#include "dtr/simgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string env_name(const std::string& sub, const std::string& flag) {
  std::string out = "DTRSURV_" + sub + "_";
  for (char c : flag) {
    if (c == '-') continue;
    out.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(c)));
  }
  return out;
}

// every option gets an environment-variable override
CLI::Option* opt(CLI::App* app, const std::string& sub, const std::string& flag,
                 CLI::Option* o) {
  (void)app;
  std::string name = flag;
  while (!name.empty() && name.front() == '-') name.erase(name.begin());
  return o->envname(env_name(sub, name));
}

json file_digest(const fs::path& p) {
  std::ostringstream hex;
  hex << std::hex << dtr::fnv1a64(dtr::read_file(p));
  return json{{"path", p.string()}, {"fnv1a64", hex.str()}};
}

void write_manifest(const fs::path& out_path, const std::string& command, const json& options,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  json m;
  m["tool"] = "dtrsurv";
  m["version"] = kVersion;
  m["command"] = command;
  m["options"] = options;
  json in = json::array();
  for (const auto& p : inputs) in.push_back(file_digest(p));
  m["inputs"] = in;
  json outj = json::array();
  for (const auto& p : outputs) outj.push_back(file_digest(p));
  m["outputs"] = outj;
  fs::path mp = out_path;
  mp += ".manifest.json";
  dtr::write_file_atomic(mp, m.dump(2) + "\n");
}

dtr::FeasibleSet feasible_from_name(const std::string& name, int K) {
  if (name == "all") return dtr::FeasibleSet::all(K);
  if (name == "noact3") return dtr::FeasibleSet::no_act_course3(K);
  throw dtr::ConfigError("--feasible must be all or noact3");
}

struct SimulateArgs {
  std::string design_path, out, schema_out;
  int n = 0;
  std::uint64_t seed = 1;
};

int run_simulate(const SimulateArgs& a) {
  dtr::SimDesign design = a.design_path.empty() ? dtr::SimDesign::default_design()
                                                : dtr::SimDesign::from_file(a.design_path);
  if (a.n > 0) design.n = a.n;
  const dtr::Cohort cohort = dtr::generate_cohort(design, a.seed);
  dtr::write_file_atomic(a.out, dtr::export_csv(cohort));
  const std::string schema_out = a.schema_out.empty() ? a.out + ".schema" : a.schema_out;
  dtr::write_file_atomic(schema_out, cohort.schema.to_text());

  json options{{"n", design.n}, {"seed", a.seed},
               {"design", a.design_path.empty() ? "builtin-default" : a.design_path}};
  std::vector<fs::path> inputs;
  if (!a.design_path.empty()) inputs.push_back(a.design_path);
  write_manifest(a.out, "simulate", options, inputs, {a.out, schema_out});
  std::cout << "simulate: wrote " << cohort.subjects.size() << " subjects to " << a.out << "\n";
  return 0;
}

struct FitArgs {
  std::string cohort, schema, config, out, baseline;
  std::uint64_t seed = 1;
  int M = 0, burnin = 0, thin = 0, threads = 1;
};

int run_fit(const FitArgs& a) {
  const dtr::CovariateSchema schema = dtr::CovariateSchema::from_file(a.schema);
  const dtr::Cohort cohort = dtr::ingest(a.cohort, schema);
  dtr::SamplerConfig config;
  if (!a.config.empty())
    config = dtr::SamplerConfig::from_keyvalues(dtr::KeyValueFile::from_file(a.config));
  if (a.M > 0) config.iterations = a.M;
  if (a.burnin > 0) config.burnin = a.burnin;
  if (a.thin > 0) config.thin = a.thin;
  if (!a.baseline.empty())
    config.baseline = a.baseline == "weibull" ? dtr::BaselineFamily::weibull
                                              : dtr::BaselineFamily::gamma_process;
  config.seed = a.seed;
  config.validate();

  std::ostringstream lines;
  long count = 0;
  dtr::SamplerDiagnostics diag;
  const dtr::FitMeta meta = dtr::run_sampler(
      cohort, config,
      [&](const dtr::ParameterDraw& d) {
        lines << dtr::draw_json(d) << "\n";
        ++count;
      },
      &diag);

  fs::path side = fs::path(a.out);
  side += ".meta.json";
  dtr::write_file_atomic(side, dtr::draws_meta_json(meta) + "\n");
  dtr::write_file_atomic(a.out, lines.str());

  for (const auto& [label, rate] : diag.acceptance_rates)
    if (rate < 0.1 || rate > 0.5)
      std::cerr << "warning: acceptance rate " << rate << " for block " << label
                << " outside [0.1, 0.5]\n";

  json options{{"seed", a.seed},
               {"M", config.iterations},
               {"burnin", config.burnin},
               {"thin", config.thin},
               {"baseline",
                config.baseline == dtr::BaselineFamily::gamma_process ? "gp" : "weibull"}};
  std::vector<fs::path> inputs = {a.cohort, a.schema};
  if (!a.config.empty()) inputs.push_back(a.config);
  write_manifest(a.out, "fit", options, inputs, {a.out, side});
  std::cout << "fit: wrote " << count << " draws to " << a.out << "\n";
  return 0;
}

struct GComputeArgs {
  std::string draws, rule = "threshold(-0.1,0.5)", grid_spec, t_list, out, summary_out;
  std::string feasible = "all";
  int B = 10000, phi_min_course = 2, threads = 1;
  double s = 0.5, t_ref = 0.0, alpha = 0.05;
  std::uint64_t seed = 1;
};

std::string summary_path(const std::string& out, const std::string& given) {
  if (!given.empty()) return given;
  fs::path p(out);
  fs::path q = p.parent_path() / (p.stem().string() + "_summary" + p.extension().string());
  return q.string();
}

int run_gcompute(const GComputeArgs& a) {
  const dtr::DrawSet set = dtr::read_draws_ndjson(a.draws);
  dtr::GCompConfig config;
  if (!a.grid_spec.empty())
    config.grid = dtr::parse_grid_spec(a.grid_spec);
  else if (!a.t_list.empty())
    config.grid = dtr::parse_number_list(a.t_list);
  else
    throw dtr::ConfigError("gcompute needs --grid-t or --t");
  config.B = a.B;
  config.s = a.s;
  config.t_ref = a.t_ref;
  config.phi_min_course = a.phi_min_course;
  config.seed = a.seed;
  config.threads = a.threads;
  const dtr::DecisionRule rule = dtr::parse_rule(a.rule);
  const dtr::FeasibleSet feasible = feasible_from_name(a.feasible, set.meta.schema.K);

  const dtr::GCompResult res = dtr::estimate_survival(set, rule, feasible, config);

  // per-draw curves
  std::ostringstream out;
  out << "m,phi,utility";
  for (double t : res.grid) out << ",psi_" << dtr::format_double(t);
  out << "\n";
  for (std::size_t mi = 0; mi < res.psi.size(); ++mi) {
    out << set.draws[mi].m << "," << dtr::format_double(res.phi[mi]) << ","
        << dtr::format_double(res.utility[mi]);
    for (double v : res.psi[mi]) out << "," << dtr::format_double(v);
    out << "\n";
  }
  dtr::write_file_atomic(a.out, out.str());

  const dtr::CurveSummary sum = dtr::posterior_summary(res.psi, a.alpha);
  std::vector<std::vector<double>> phi_col(res.phi.size()), u_col(res.utility.size());
  for (std::size_t i = 0; i < res.phi.size(); ++i) phi_col[i] = {res.phi[i]};
  for (std::size_t i = 0; i < res.utility.size(); ++i) u_col[i] = {res.utility[i]};
  const dtr::CurveSummary phi_sum = dtr::posterior_summary(phi_col, a.alpha);
  const dtr::CurveSummary u_sum = dtr::posterior_summary(u_col, a.alpha);

  std::ostringstream s2;
  s2 << "quantity,t,mean,lower,upper,extrapolated\n";
  for (std::size_t g = 0; g < res.grid.size(); ++g)
    s2 << "psi," << dtr::format_double(res.grid[g]) << "," << dtr::format_double(sum.mean[g])
       << "," << dtr::format_double(sum.lower[g]) << "," << dtr::format_double(sum.upper[g])
       << "," << (res.extrapolated[g] ? 1 : 0) << "\n";
  s2 << "phi,," << dtr::format_double(phi_sum.mean[0]) << ","
     << dtr::format_double(phi_sum.lower[0]) << "," << dtr::format_double(phi_sum.upper[0])
     << ",0\n";
  s2 << "utility," << dtr::format_double(res.t_ref) << "," << dtr::format_double(u_sum.mean[0])
     << "," << dtr::format_double(u_sum.lower[0]) << "," << dtr::format_double(u_sum.upper[0])
     << "," << (res.t_ref > set.meta.max_observed_death ? 1 : 0) << "\n";
  const std::string sum_path = summary_path(a.out, a.summary_out);
  dtr::write_file_atomic(sum_path, s2.str());

  json options{{"rule", rule.name},   {"B", a.B},       {"s", a.s},
               {"t_ref", res.t_ref},  {"seed", a.seed}, {"alpha", a.alpha},
               {"feasible", a.feasible}};
  write_manifest(a.out, "gcompute", options, {a.draws}, {a.out, sum_path});
  std::cout << "gcompute: " << res.psi.size() << " draws x " << res.grid.size()
            << " grid points -> " << a.out << "\n";
  return 0;
}

struct OptimizeArgs {
  std::string draws, objective = "survival", tau1, tau2, out, feasible = "all";
  double t_ref = 0.0, s = 0.5, alpha = 0.10;
  int B = 1000, phi_min_course = 2, threads = 1;
  std::uint64_t seed = 1;
};

int run_optimize(const OptimizeArgs& a) {
  const dtr::DrawSet set = dtr::read_draws_ndjson(a.draws);
  const auto tau1 = dtr::parse_number_list(a.tau1);
  const auto tau2 = dtr::parse_number_list(a.tau2);
  const auto grid = dtr::rule_grid(tau1, tau2);
  dtr::GCompConfig config;
  config.grid = {a.t_ref > 0 ? a.t_ref : 1.0};
  config.B = a.B;
  config.s = a.s;
  config.t_ref = a.t_ref;
  config.phi_min_course = a.phi_min_course;
  config.seed = a.seed;
  config.threads = a.threads;
  const dtr::RuleObjective obj = a.objective == "utility" ? dtr::RuleObjective::utility
                                                          : dtr::RuleObjective::survival;
  if (a.objective != "utility" && a.objective != "survival")
    throw dtr::ConfigError("--objective must be survival or utility");
  const dtr::FeasibleSet feasible = feasible_from_name(a.feasible, set.meta.schema.K);

  const dtr::OptimalRulePosterior post =
      dtr::optimize_rule(set, grid, obj, feasible, config, a.alpha);

  std::ostringstream out;
  out << "tau1,tau2,mass,in_credible_set\n";
  for (std::size_t c = 0; c < post.grid.size(); ++c) {
    const bool in_set = std::binary_search(post.credible_set.begin(), post.credible_set.end(),
                                           static_cast<int>(c));
    out << dtr::format_double(post.grid[c].tau1) << "," << dtr::format_double(post.grid[c].tau2)
        << "," << dtr::format_double(post.pmf[c]) << "," << (in_set ? 1 : 0) << "\n";
  }
  dtr::write_file_atomic(a.out, out.str());

  json options{{"objective", a.objective}, {"t_ref", a.t_ref}, {"s", a.s},
               {"alpha", a.alpha},         {"B", a.B},         {"seed", a.seed}};
  write_manifest(a.out, "optimize", options, {a.draws}, {a.out});
  std::cout << "optimize: mode tau = (" << dtr::format_double(post.grid[post.mode_index].tau1)
            << ", " << dtr::format_double(post.grid[post.mode_index].tau2) << "), "
            << post.credible_set.size() << " cells in the " << dtr::format_double(post.level)
            << " credible set -> " << a.out << "\n";
  return 0;
}

struct CalibrateArgs {
  std::string design_path, t_list = "5,10,15,20", models = "gp", rule = "below(x,0)", out;
  int reps = 200, n = 0, M = 4000, burnin = 2000, thin = 4, B = 2000, intervals = 0,
      threads = 1;
  bool halve_partition = false;
  std::uint64_t seed = 1;
  std::size_t truth_mc = 1000000;
};

int run_calibrate(const CalibrateArgs& a) {
  dtr::SimDesign design = a.design_path.empty() ? dtr::SimDesign::default_design()
                                                : dtr::SimDesign::from_file(a.design_path);
  dtr::CalibrateOptions options;
  options.reps = a.reps;
  options.n = a.n;
  options.B = a.B;
  options.seed = a.seed;
  options.threads = a.threads;
  options.truth_mc = a.truth_mc;
  options.fit.iterations = a.M;
  options.fit.burnin = a.burnin;
  options.fit.thin = a.thin;
  options.fit.intervals = a.intervals;
  options.fit.halve_partition = a.halve_partition;
  options.models.clear();
  for (const auto& name : dtr::split(a.models, ',')) {
    if (name == "gp")
      options.models.push_back(dtr::BaselineFamily::gamma_process);
    else if (name == "weibull")
      options.models.push_back(dtr::BaselineFamily::weibull);
    else
      throw dtr::ConfigError("--models entries must be gp or weibull");
  }
  const auto t_points = dtr::parse_number_list(a.t_list);
  const dtr::DecisionRule rule = dtr::parse_rule(a.rule);

  const auto rows = dtr::calibrate(design, rule, t_points, options);

  std::ostringstream out;
  out << "model,t,truth,truth_se,bias_pct,coverage_pct,mean_width,reps_used,failures\n";
  for (const auto& r : rows)
    out << r.model << "," << dtr::format_double(r.t) << "," << dtr::format_double(r.truth) << ","
        << dtr::format_double(r.truth_se) << "," << dtr::format_double(r.bias_pct) << ","
        << dtr::format_double(r.coverage_pct) << "," << dtr::format_double(r.mean_width) << ","
        << r.reps_used << "," << r.failures << "\n";
  dtr::write_file_atomic(a.out, out.str());

  json options_j{{"reps", a.reps},   {"n", a.n},       {"M", a.M},
                 {"burnin", a.burnin}, {"thin", a.thin}, {"B", a.B},
                 {"models", a.models}, {"rule", rule.name}, {"seed", a.seed},
                 {"halve_partition", a.halve_partition}};
  std::vector<fs::path> inputs;
  if (!a.design_path.empty()) inputs.push_back(a.design_path);
  write_manifest(a.out, "calibrate", options_j, inputs, {a.out});
  std::cout << "calibrate: " << rows.size() << " rows -> " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian dynamic treatment rules for multi-course survival data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic cohort");
  opt(sim_cmd, "SIMULATE", "design", sim_cmd->add_option("--design", sim.design_path));
  opt(sim_cmd, "SIMULATE", "n", sim_cmd->add_option("--n", sim.n));
  opt(sim_cmd, "SIMULATE", "seed", sim_cmd->add_option("--seed", sim.seed));
  opt(sim_cmd, "SIMULATE", "out", sim_cmd->add_option("--out", sim.out)->required());
  opt(sim_cmd, "SIMULATE", "schema-out", sim_cmd->add_option("--schema-out", sim.schema_out));

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Sample the posterior by blocked MCMC");
  opt(fit_cmd, "FIT", "cohort", fit_cmd->add_option("--cohort", fit.cohort)->required());
  opt(fit_cmd, "FIT", "schema", fit_cmd->add_option("--schema", fit.schema)->required());
  opt(fit_cmd, "FIT", "config", fit_cmd->add_option("--config", fit.config));
  opt(fit_cmd, "FIT", "out", fit_cmd->add_option("--out", fit.out)->required());
  opt(fit_cmd, "FIT", "seed", fit_cmd->add_option("--seed", fit.seed));
  opt(fit_cmd, "FIT", "M", fit_cmd->add_option("--M", fit.M));
  opt(fit_cmd, "FIT", "burnin", fit_cmd->add_option("--burnin", fit.burnin));
  opt(fit_cmd, "FIT", "thin", fit_cmd->add_option("--thin", fit.thin));
  opt(fit_cmd, "FIT", "baseline",
      fit_cmd->add_option("--baseline", fit.baseline)->check(CLI::IsMember({"gp", "weibull"})));
  opt(fit_cmd, "FIT", "threads", fit_cmd->add_option("--threads", fit.threads));

  GComputeArgs gc;
  auto* gc_cmd = app.add_subcommand("gcompute", "Posterior g-computation under a rule");
  opt(gc_cmd, "GCOMPUTE", "draws", gc_cmd->add_option("--draws", gc.draws)->required());
  opt(gc_cmd, "GCOMPUTE", "rule", gc_cmd->add_option("--rule", gc.rule));
  opt(gc_cmd, "GCOMPUTE", "grid-t", gc_cmd->add_option("--grid-t", gc.grid_spec));
  opt(gc_cmd, "GCOMPUTE", "t", gc_cmd->add_option("--t", gc.t_list));
  opt(gc_cmd, "GCOMPUTE", "B", gc_cmd->add_option("--B", gc.B));
  opt(gc_cmd, "GCOMPUTE", "s", gc_cmd->add_option("--s", gc.s));
  opt(gc_cmd, "GCOMPUTE", "t-ref", gc_cmd->add_option("--t-ref", gc.t_ref));
  opt(gc_cmd, "GCOMPUTE", "alpha", gc_cmd->add_option("--alpha", gc.alpha));
  opt(gc_cmd, "GCOMPUTE", "phi-min-course",
      gc_cmd->add_option("--phi-min-course", gc.phi_min_course));
  opt(gc_cmd, "GCOMPUTE", "feasible",
      gc_cmd->add_option("--feasible", gc.feasible)->check(CLI::IsMember({"all", "noact3"})));
  opt(gc_cmd, "GCOMPUTE", "seed", gc_cmd->add_option("--seed", gc.seed));
  opt(gc_cmd, "GCOMPUTE", "threads", gc_cmd->add_option("--threads", gc.threads));
  opt(gc_cmd, "GCOMPUTE", "out", gc_cmd->add_option("--out", gc.out)->required());
  opt(gc_cmd, "GCOMPUTE", "summary-out", gc_cmd->add_option("--summary-out", gc.summary_out));

  OptimizeArgs op;
  auto* op_cmd = app.add_subcommand("optimize", "Posterior over optimal threshold rules");
  opt(op_cmd, "OPTIMIZE", "draws", op_cmd->add_option("--draws", op.draws)->required());
  opt(op_cmd, "OPTIMIZE", "objective",
      op_cmd->add_option("--objective", op.objective)
          ->check(CLI::IsMember({"survival", "utility"})));
  opt(op_cmd, "OPTIMIZE", "t-ref", op_cmd->add_option("--t-ref", op.t_ref)->required());
  opt(op_cmd, "OPTIMIZE", "s", op_cmd->add_option("--s", op.s));
  opt(op_cmd, "OPTIMIZE", "tau1", op_cmd->add_option("--tau1", op.tau1)->required());
  opt(op_cmd, "OPTIMIZE", "tau2", op_cmd->add_option("--tau2", op.tau2)->required());
  opt(op_cmd, "OPTIMIZE", "alpha", op_cmd->add_option("--alpha", op.alpha));
  opt(op_cmd, "OPTIMIZE", "B", op_cmd->add_option("--B", op.B));
  opt(op_cmd, "OPTIMIZE", "phi-min-course",
      op_cmd->add_option("--phi-min-course", op.phi_min_course));
  opt(op_cmd, "OPTIMIZE", "feasible",
      op_cmd->add_option("--feasible", op.feasible)->check(CLI::IsMember({"all", "noact3"})));
  opt(op_cmd, "OPTIMIZE", "seed", op_cmd->add_option("--seed", op.seed));
  opt(op_cmd, "OPTIMIZE", "threads", op_cmd->add_option("--threads", op.threads));
  opt(op_cmd, "OPTIMIZE", "out", op_cmd->add_option("--out", op.out)->required());

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Frequentist calibration study");
  opt(cal_cmd, "CALIBRATE", "design", cal_cmd->add_option("--design", cal.design_path));
  opt(cal_cmd, "CALIBRATE", "reps", cal_cmd->add_option("--reps", cal.reps));
  opt(cal_cmd, "CALIBRATE", "n", cal_cmd->add_option("--n", cal.n));
  opt(cal_cmd, "CALIBRATE", "t", cal_cmd->add_option("--t", cal.t_list));
  opt(cal_cmd, "CALIBRATE", "models", cal_cmd->add_option("--models", cal.models));
  opt(cal_cmd, "CALIBRATE", "rule", cal_cmd->add_option("--rule", cal.rule));
  opt(cal_cmd, "CALIBRATE", "M", cal_cmd->add_option("--M", cal.M));
  opt(cal_cmd, "CALIBRATE", "burnin", cal_cmd->add_option("--burnin", cal.burnin));
  opt(cal_cmd, "CALIBRATE", "thin", cal_cmd->add_option("--thin", cal.thin));
  opt(cal_cmd, "CALIBRATE", "B", cal_cmd->add_option("--B", cal.B));
  opt(cal_cmd, "CALIBRATE", "intervals", cal_cmd->add_option("--intervals", cal.intervals));
  opt(cal_cmd, "CALIBRATE", "halve-partition",
      cal_cmd->add_flag("--halve-partition", cal.halve_partition));
  opt(cal_cmd, "CALIBRATE", "truth-mc", cal_cmd->add_option("--truth-mc", cal.truth_mc));
  opt(cal_cmd, "CALIBRATE", "seed", cal_cmd->add_option("--seed", cal.seed));
  opt(cal_cmd, "CALIBRATE", "threads", cal_cmd->add_option("--threads", cal.threads));
  opt(cal_cmd, "CALIBRATE", "out", cal_cmd->add_option("--out", cal.out)->required());

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim_cmd->parsed()) return run_simulate(sim);
    if (fit_cmd->parsed()) return run_fit(fit);
    if (gc_cmd->parsed()) return run_gcompute(gc);
    if (op_cmd->parsed()) return run_optimize(op);
    if (cal_cmd->parsed()) return run_calibrate(cal);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
