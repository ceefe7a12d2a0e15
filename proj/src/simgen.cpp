#include "dtr/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "dtr/confounders.hpp"
#include "dtr/io.hpp"
#include "dtr/parallel.hpp"

namespace dtr {

CovariateSchema SimDesign::schema() const {
  CovariateSchema s;
  s.K = K;
  s.covariates = {
      {"x", CovariateType::continuous, true, 0.0, 1.0},
      {"v", CovariateType::binary, true, 0.0, 1.0},
      {"b1", CovariateType::continuous, false, 0.0, 1.0},
      {"b2", CovariateType::continuous, false, 0.0, 1.0},
      {"b3", CovariateType::binary, false, 0.0, 1.0},
      {"b4", CovariateType::binary, false, 0.0, 1.0},
  };
  s.lag = LagPolicy::current_previous;
  s.standardize = false;  // generator covariates are already unit scale
  s.w_cutpoints = w_cutpoints;
  s.ef_covariate = "x";
  return s;
}

void SimDesign::validate() const {
  if (n < 1) throw ConfigError("design: n must be >= 1");
  if (K < 1) throw ConfigError("design: K must be >= 1");
  const CovariateSchema sch = schema();
  auto expect = [&](const std::vector<double>& v, int dim, const std::string& what) {
    if (static_cast<int>(v.size()) != dim)
      throw ConfigError("design: " + what + " needs " + std::to_string(dim) + " values, got " +
                        std::to_string(v.size()));
  };
  if (static_cast<int>(wb_t.size()) != K || static_cast<int>(wb_y.size()) != K ||
      static_cast<int>(trt.size()) != K || static_cast<int>(eta_x.size()) != K ||
      static_cast<int>(eta_v.size()) != K)
    throw ConfigError("design: per-course parameter lists must have K entries");
  for (int k = 1; k <= K; ++k) {
    const int hdim = model_design_dim(sch, k) + 1;
    expect(wb_t[k - 1].beta, hdim, "beta_t." + std::to_string(k));
    if (k < K) expect(wb_y[k - 1].beta, hdim, "beta_y." + std::to_string(k));
    expect(trt[k - 1], 1 + model_design_dim(sch, k), "trt." + std::to_string(k));
    if (k >= 2) {
      expect(eta_x[k - 1], confounder_design_dim(sch, k), "eta_x." + std::to_string(k));
      expect(eta_v[k - 1], confounder_design_dim(sch, k), "eta_v." + std::to_string(k));
    }
    if (!(wb_t[k - 1].shape > 0) || !(wb_t[k - 1].scale > 0))
      throw ConfigError("design: nonpositive Weibull death parameters at course " +
                        std::to_string(k));
  }
  if (!(sigma_x > 0)) throw ConfigError("design: sigma_x must be > 0");
  if (!(censor_rate > 0)) throw ConfigError("design: censor_rate must be > 0");
}

namespace {

SubjectRecord generate_observational(const SimDesign& d, const CovariateSchema& schema,
                                     RngStream& rng, int subject_index) {
  SubjectRecord rec;
  rec.subject_id = "s" + std::to_string(subject_index + 1);
  History h;
  const double censor = d.censor_delay - std::log(rng.uniform()) / d.censor_rate;
  double elapsed = 0.0;
  for (int k = 1; k <= d.K; ++k) {
    std::vector<double> row(6, 0.0);
    if (k == 1) {
      row[0] = rng.normal(d.mu_x1, d.sd_x1);
      row[1] = rng.bernoulli(d.p_v1);
      row[2] = rng.normal();
      row[3] = rng.normal();
      row[4] = rng.bernoulli(d.p_b3);
      row[5] = rng.bernoulli(d.p_b4);
    } else {
      const auto z = encode_confounder_design(h, k, schema);
      row = h.rows.front();
      row[0] = rng.normal(dot(d.eta_x[k - 1], z), d.sigma_x);
      row[1] = rng.bernoulli(logistic(dot(d.eta_v[k - 1], z)));
    }
    h.rows.push_back(row);

    std::vector<double> t_design;
    t_design.push_back(1.0);
    const auto m = encode_model_design(h, k, schema);
    t_design.insert(t_design.end(), m.begin(), m.end());
    const int a_k = rng.bernoulli(logistic(dot(d.trt[k - 1], t_design)));
    h.a.push_back(a_k);

    const auto x = encode_hazard_design(h, k, a_k, schema);
    const double wt = sample_waiting_time(HazardModel{d.wb_t[k - 1]}, x, rng.uniform());
    const double wy = k < d.K
                          ? sample_waiting_time(HazardModel{d.wb_y[k - 1]}, x, rng.uniform())
                          : std::numeric_limits<double>::infinity();
    const double remaining = censor - elapsed;

    CourseRecord cr;
    cr.k = k;
    cr.covariates = row;
    cr.treatment = a_k;
    if (remaining <= std::min(wt, wy)) {
      cr.waiting_time = remaining;
      cr.indicator = kCensored;
      rec.courses.push_back(cr);
      break;
    }
    if (wt < wy) {
      cr.waiting_time = wt;
      cr.indicator = kDeath;
      rec.courses.push_back(cr);
      break;
    }
    cr.waiting_time = wy;
    cr.indicator = kNextTreatment;
    rec.courses.push_back(cr);
    h.w.push_back(wy);
    elapsed += wy;
  }
  return rec;
}

double generate_potential_death(const SimDesign& d, const CovariateSchema& schema,
                                const DecisionRule& rule, const FeasibleSet& feasible,
                                RngStream& rng) {
  History h;
  double elapsed = 0.0;
  for (int k = 1; k <= d.K; ++k) {
    std::vector<double> row(6, 0.0);
    if (k == 1) {
      row[0] = rng.normal(d.mu_x1, d.sd_x1);
      row[1] = rng.bernoulli(d.p_v1);
      row[2] = rng.normal();
      row[3] = rng.normal();
      row[4] = rng.bernoulli(d.p_b3);
      row[5] = rng.bernoulli(d.p_b4);
    } else {
      const auto z = encode_confounder_design(h, k, schema);
      row = h.rows.front();
      row[0] = rng.normal(dot(d.eta_x[k - 1], z), d.sigma_x);
      row[1] = rng.bernoulli(logistic(dot(d.eta_v[k - 1], z)));
    }
    h.rows.push_back(row);
    const int a_k = apply_rule(rule, h, feasible, k, schema).treatment;
    h.a.push_back(a_k);
    const auto x = encode_hazard_design(h, k, a_k, schema);
    const double wt = sample_waiting_time(HazardModel{d.wb_t[k - 1]}, x, rng.uniform());
    if (k == d.K) return elapsed + wt;
    const double wy = sample_waiting_time(HazardModel{d.wb_y[k - 1]}, x, rng.uniform());
    if (wt < wy) return elapsed + wt;
    elapsed += wy;
    h.w.push_back(wy);
  }
  return elapsed;  // unreachable
}

}  // namespace

Cohort generate_cohort(const SimDesign& design, std::uint64_t seed) {
  design.validate();
  const CovariateSchema sch = design.schema();
  Cohort cohort;
  cohort.schema = sch;
  cohort.subjects.reserve(static_cast<std::size_t>(design.n));
  for (int i = 0; i < design.n; ++i) {
    RngStream rng = RngStream::derive(seed, {0x636f686fULL, static_cast<std::uint64_t>(i)});
    cohort.subjects.push_back(generate_observational(design, sch, rng, i));
  }
  cohort.validate();
  return cohort;
}

TruthCurve true_survival(const SimDesign& design, const DecisionRule& rule,
                         std::span<const double> t_points, std::size_t n_mc,
                         std::uint64_t seed) {
  design.validate();
  const CovariateSchema sch = design.schema();
  const FeasibleSet feasible = FeasibleSet::all(design.K);
  std::vector<std::size_t> counts(t_points.size(), 0);
  for (std::size_t i = 0; i < n_mc; ++i) {
    RngStream rng = RngStream::derive(seed, {0x74727574ULL, static_cast<std::uint64_t>(i)});
    const double death = generate_potential_death(design, sch, rule, feasible, rng);
    for (std::size_t g = 0; g < t_points.size(); ++g)
      if (death > t_points[g]) ++counts[g];
  }
  TruthCurve truth;
  truth.t.assign(t_points.begin(), t_points.end());
  for (std::size_t g = 0; g < t_points.size(); ++g) {
    const double p = static_cast<double>(counts[g]) / static_cast<double>(n_mc);
    truth.psi.push_back(p);
    truth.se.push_back(std::sqrt(p * (1.0 - p) / static_cast<double>(n_mc)));
  }
  return truth;
}

std::vector<CalibrationRow> calibrate(const SimDesign& design, const DecisionRule& rule,
                                      std::span<const double> t_points,
                                      const CalibrateOptions& options) {
  SimDesign d = design;
  if (options.n > 0) d.n = options.n;
  d.validate();
  const FeasibleSet feasible = FeasibleSet::all(d.K);

  const TruthCurve truth =
      true_survival(d, rule, t_points, options.truth_mc, derive_key(options.seed, {0x74ULL}));

  struct RepOutcome {
    bool ok = false;
    // per model per t: posterior mean, lower, upper
    std::vector<std::vector<std::array<double, 3>>> cells;
  };
  const std::size_t n_models = options.models.size();
  std::vector<RepOutcome> reps(static_cast<std::size_t>(options.reps));

  parallel_for(static_cast<std::size_t>(options.reps), options.threads, [&](std::size_t r) {
    RepOutcome& out = reps[r];
    out.cells.assign(n_models, std::vector<std::array<double, 3>>(
                                   t_points.size(), {0.0, 0.0, 0.0}));
    try {
      const std::uint64_t rep_seed = derive_key(options.seed, {0x726570ULL, r});
      const Cohort cohort = generate_cohort(d, rep_seed);
      for (std::size_t mi = 0; mi < n_models; ++mi) {
        SamplerConfig fit = options.fit;
        fit.baseline = options.models[mi];
        fit.seed = derive_key(rep_seed, {0x666974ULL, mi});
        DrawSet set;
        set.meta = run_sampler(cohort, fit, [&](const ParameterDraw& dr) {
          set.draws.push_back(dr);
        });
        GCompConfig gc;
        gc.grid.assign(t_points.begin(), t_points.end());
        gc.B = options.B;
        gc.seed = derive_key(rep_seed, {0x6763ULL, mi});
        gc.threads = 1;
        const GCompResult res = estimate_survival(set, rule, feasible, gc);
        const CurveSummary sum = posterior_summary(res.psi, 0.05);
        for (std::size_t g = 0; g < t_points.size(); ++g)
          out.cells[mi][g] = {sum.mean[g], sum.lower[g], sum.upper[g]};
      }
      out.ok = true;
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "calibrate replicate " << r << " failed: " << e.what() << "\n";
      std::fputs(msg.str().c_str(), stderr);
      out.ok = false;
    }
  });

  std::vector<CalibrationRow> rows;
  for (std::size_t mi = 0; mi < n_models; ++mi) {
    for (std::size_t g = 0; g < t_points.size(); ++g) {
      CalibrationRow row;
      row.model = options.models[mi] == BaselineFamily::gamma_process ? "gp" : "weibull";
      row.t = t_points[g];
      row.truth = truth.psi[g];
      row.truth_se = truth.se[g];
      double mean_est = 0.0, width = 0.0;
      int used = 0, covered = 0;
      for (const auto& rep : reps) {
        if (!rep.ok) continue;
        const auto& cell = rep.cells[mi][g];
        mean_est += cell[0];
        width += cell[2] - cell[1];
        if (cell[1] <= truth.psi[g] && truth.psi[g] <= cell[2]) ++covered;
        ++used;
      }
      row.reps_used = used;
      row.failures = options.reps - used;
      if (used > 0) {
        mean_est /= used;
        row.bias_pct = truth.psi[g] > 0
                           ? std::abs(mean_est - truth.psi[g]) / truth.psi[g] * 100.0
                           : std::abs(mean_est - truth.psi[g]) * 100.0;
        row.coverage_pct = 100.0 * covered / used;
        row.mean_width = width / used;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

// ---------------- design file io ----------------

namespace {

std::string join_doubles(std::span<const double> v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << format_double(v[i]);
  return out.str();
}

}  // namespace

std::string SimDesign::to_text() const {
  std::ostringstream out;
  out << "n = " << n << "\n";
  out << "K = " << K << "\n";
  out << "mu_x1 = " << format_double(mu_x1) << "\n";
  out << "sd_x1 = " << format_double(sd_x1) << "\n";
  out << "p_v1 = " << format_double(p_v1) << "\n";
  out << "p_b3 = " << format_double(p_b3) << "\n";
  out << "p_b4 = " << format_double(p_b4) << "\n";
  out << "sigma_x = " << format_double(sigma_x) << "\n";
  out << "censor_delay = " << format_double(censor_delay) << "\n";
  out << "censor_rate = " << format_double(censor_rate) << "\n";
  out << "w_cutpoints = " << join_doubles(w_cutpoints) << "\n";
  for (int k = 1; k <= K; ++k) {
    out << "wb_t." << k << " = " << format_double(wb_t[k - 1].shape) << ","
        << format_double(wb_t[k - 1].scale) << "\n";
    out << "beta_t." << k << " = " << join_doubles(wb_t[k - 1].beta) << "\n";
    if (k < K) {
      out << "wb_y." << k << " = " << format_double(wb_y[k - 1].shape) << ","
          << format_double(wb_y[k - 1].scale) << "\n";
      out << "beta_y." << k << " = " << join_doubles(wb_y[k - 1].beta) << "\n";
    }
    out << "trt." << k << " = " << join_doubles(trt[k - 1]) << "\n";
    if (k >= 2) {
      out << "eta_x." << k << " = " << join_doubles(eta_x[k - 1]) << "\n";
      out << "eta_v." << k << " = " << join_doubles(eta_v[k - 1]) << "\n";
    }
  }
  return out.str();
}

SimDesign SimDesign::from_file(const std::filesystem::path& p) {
  const KeyValueFile kv = KeyValueFile::from_file(p);
  SimDesign d = default_design();
  d.n = kv.get_int("n", d.n);
  d.K = kv.get_int("K", d.K);
  d.mu_x1 = kv.get_double("mu_x1", d.mu_x1);
  d.sd_x1 = kv.get_double("sd_x1", d.sd_x1);
  d.p_v1 = kv.get_double("p_v1", d.p_v1);
  d.p_b3 = kv.get_double("p_b3", d.p_b3);
  d.p_b4 = kv.get_double("p_b4", d.p_b4);
  d.sigma_x = kv.get_double("sigma_x", d.sigma_x);
  d.censor_delay = kv.get_double("censor_delay", d.censor_delay);
  d.censor_rate = kv.get_double("censor_rate", d.censor_rate);
  if (kv.has("w_cutpoints")) d.w_cutpoints = parse_number_list(kv.get("w_cutpoints"));
  d.wb_y.resize(d.K);
  d.wb_t.resize(d.K);
  d.trt.resize(d.K);
  d.eta_x.resize(d.K);
  d.eta_v.resize(d.K);
  for (int k = 1; k <= d.K; ++k) {
    const std::string suffix = "." + std::to_string(k);
    if (kv.has("wb_t" + suffix)) {
      auto v = parse_number_list(kv.get("wb_t" + suffix));
      if (v.size() != 2) throw ConfigError("wb_t" + suffix + " needs shape,scale");
      d.wb_t[k - 1].shape = v[0];
      d.wb_t[k - 1].scale = v[1];
    }
    if (kv.has("beta_t" + suffix)) d.wb_t[k - 1].beta = parse_number_list(kv.get("beta_t" + suffix));
    if (k < d.K) {
      if (kv.has("wb_y" + suffix)) {
        auto v = parse_number_list(kv.get("wb_y" + suffix));
        if (v.size() != 2) throw ConfigError("wb_y" + suffix + " needs shape,scale");
        d.wb_y[k - 1].shape = v[0];
        d.wb_y[k - 1].scale = v[1];
      }
      if (kv.has("beta_y" + suffix))
        d.wb_y[k - 1].beta = parse_number_list(kv.get("beta_y" + suffix));
    }
    if (kv.has("trt" + suffix)) d.trt[k - 1] = parse_number_list(kv.get("trt" + suffix));
    if (kv.has("eta_x" + suffix)) d.eta_x[k - 1] = parse_number_list(kv.get("eta_x" + suffix));
    if (kv.has("eta_v" + suffix)) d.eta_v[k - 1] = parse_number_list(kv.get("eta_v" + suffix));
  }
  d.validate();
  return d;
}

SimDesign SimDesign::default_design() {
  SimDesign d;
  d.n = 300;
  d.K = 4;
  d.wb_y.resize(4);
  d.wb_t.resize(4);
  d.trt.resize(4);
  d.eta_x.resize(4);
  d.eta_v.resize(4);

  // hazard design layout, k = 1: [x, v, b1, b2, b3, b4, a]
  //                      k >= 2: [x, v, b1, b2, b3, b4, x_prev, v_prev, a_prev,
  //                               wd2, wd3, wd4, a]
  const std::vector<double> bt1 = {-0.20, 0.30, 0.20, -0.20, 0.25, 0.00, -0.35};
  const std::vector<double> btk = {-0.20, 0.30, 0.20, -0.20, 0.25, 0.00,
                                   -0.10, 0.15, -0.10, 0.05, 0.10, 0.15, -0.35};
  const std::vector<double> by1 = {0.12, -0.20, -0.08, 0.08, -0.08, 0.00, -0.05};
  const std::vector<double> byk = {0.12, -0.20, -0.08, 0.08, -0.08, 0.00,
                                   0.04, -0.04, -0.05, -0.80, -1.60, -2.40, -0.05};

  d.wb_y[0] = {1.8, 3.3, by1};
  d.wb_y[1] = {4.0, 3.1, byk};
  d.wb_y[2] = {4.0, 3.1, byk};
  d.wb_y[3] = {1.0, 1.0, {}};  // no next-treatment hazard at the last course

  d.wb_t[0] = {1.5, 36.0, bt1};
  d.wb_t[1] = {1.8, 19.5, btk};
  d.wb_t[2] = {3.2, 6.6, btk};
  d.wb_t[3] = {6.0, 10.3, btk};

  // treatment assignment, [1 ++ model design]
  d.trt[0] = {0.0, -0.8, 0.5, 0.3, -0.3, 0.4, 0.0};
  const std::vector<double> trtk = {0.0, -0.8, 0.5, 0.3, -0.3, 0.4, 0.0,
                                    -0.3, 0.3, 0.8, -0.05, -0.10, -0.15};
  d.trt[1] = trtk;
  d.trt[2] = trtk;
  d.trt[3] = trtk;

  // confounder design layout: [1, b1, b2, b3, b4, x_prev, v_prev, a_prev,
  //                            wd2, wd3, wd4]
  const std::vector<double> ex = {0.10, 0.10, -0.10, 0.10, 0.00, 0.70,
                                  -0.10, -0.50, -0.05, -0.10, -0.20};
  const std::vector<double> ev = {-1.20, 0.10, 0.00, 0.20, 0.10, -0.30,
                                  0.80, 0.30, 0.10, 0.20, 0.30};
  for (int k = 2; k <= 4; ++k) {
    d.eta_x[k - 1] = ex;
    d.eta_v[k - 1] = ev;
  }
  d.censor_delay = 15.2;
  d.censor_rate = 3.0;
  d.w_cutpoints = {2.5, 3.7, 5.3};
  d.validate();
  return d;
}

}  // namespace dtr
