#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dtr/data.hpp"
#include "dtr/gcomp.hpp"
#include "dtr/hazards.hpp"
#include "dtr/mcmc.hpp"
#include "dtr/rules.hpp"

namespace dtr {

// Four-course synthetic cohort design: two time-varying confounders (one
// continuous, one binary), four time-constant confounders, Weibull
// proportional-hazard waiting times to next treatment and death, logistic
// treatment assignment, delayed-exponential censoring. Coefficient layouts
// follow the encoders in data.hpp.
struct SimDesign {
  int n = 300;
  int K = 4;

  // course-1 covariate generators; b1,b2 ~ N(0,1), b3,b4 ~ Bernoulli
  double mu_x1 = 0.0, sd_x1 = 1.0, p_v1 = 0.25;
  double p_b3 = 0.5, p_b4 = 0.3;
  double sigma_x = 0.6;  // gaussian noise of the continuous confounder

  // waiting-time models per course (wb_y unused at course K)
  std::vector<WeibullHazardModel> wb_y, wb_t;
  // treatment assignment, [1 ++ model design]
  std::vector<std::vector<double>> trt;
  // confounder regressions for courses 2..K, confounder-design layout
  std::vector<std::vector<double>> eta_x, eta_v;  // index k-1, empty at k=1

  double censor_delay = 15.0;
  double censor_rate = 0.8;
  std::vector<double> w_cutpoints = {2.5, 3.5, 5.0};

  CovariateSchema schema() const;
  void validate() const;

  static SimDesign default_design();
  static SimDesign from_file(const std::filesystem::path& p);
  std::string to_text() const;
};

Cohort generate_cohort(const SimDesign& design, std::uint64_t seed);

struct TruthCurve {
  std::vector<double> t;
  std::vector<double> psi;
  std::vector<double> se;
};

// Ground-truth potential survival under the rule: simulate the design's
// generative process with treatments set by the rule and no censoring.
TruthCurve true_survival(const SimDesign& design, const DecisionRule& rule,
                         std::span<const double> t_points, std::size_t n_mc, std::uint64_t seed);

struct CalibrationRow {
  std::string model;
  double t = 0.0;
  double truth = 0.0;
  double truth_se = 0.0;
  double bias_pct = 0.0;      // |mean posterior mean - truth| as % of truth
  double coverage_pct = 0.0;  // 95% interval coverage
  double mean_width = 0.0;
  int reps_used = 0;
  int failures = 0;
};

struct CalibrateOptions {
  int reps = 200;
  int n = 0;  // 0 = design default
  std::vector<BaselineFamily> models = {BaselineFamily::gamma_process};
  SamplerConfig fit;  // seed field ignored; per-replicate seeds derived
  int B = 2000;
  std::uint64_t seed = 1;
  int threads = 1;
  std::size_t truth_mc = 1000000;
};

std::vector<CalibrationRow> calibrate(const SimDesign& design, const DecisionRule& rule,
                                      std::span<const double> t_points,
                                      const CalibrateOptions& options);

}  // namespace dtr
