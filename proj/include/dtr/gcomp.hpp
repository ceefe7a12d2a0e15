#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dtr/mcmc.hpp"
#include "dtr/rules.hpp"

namespace dtr {

struct GCompConfig {
  std::vector<double> grid;  // evaluation times for Psi
  int B = 10000;             // Monte Carlo trajectories per draw
  double s = 0.5;            // adverse EF threshold for Phi
  double t_ref = 0.0;        // utility reference time; 0 = last grid point
  int phi_min_course = 2;    // Phi scans simulated EF from this course on
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
  double reference_time() const;
};

struct Trajectory {
  double death_time = 0.0;  // +inf when beyond a truncated horizon
  int courses = 0;          // kappa
  History path;
};

// One potential-outcome trajectory under the rule: simulate confounders,
// decide treatment, race the two cause-specific waiting times, repeat.
// Censoring is never simulated.
Trajectory simulate_trajectory(const FitMeta& meta, const ParameterDraw& draw,
                               const DecisionRule& rule, const FeasibleSet& feasible,
                               RngStream& rng);

struct GCompResult {
  std::vector<double> grid;
  std::vector<std::vector<double>> psi;  // one curve per draw
  std::vector<double> phi;               // per draw
  std::vector<double> utility;           // Psi(t_ref) - Phi, per draw
  std::vector<bool> extrapolated;        // grid point beyond max observed death
  double t_ref = 0.0;
  double s = 0.5;
};

GCompResult estimate_survival(const DrawSet& draws, const DecisionRule& rule,
                              const FeasibleSet& feasible, const GCompConfig& config);

struct CurveSummary {
  std::vector<double> mean, lower, upper;
};

// pointwise mean and percentile interval (alpha/2, 1-alpha/2), linear
// interpolation convention; columns of `curves` index the grid
CurveSummary posterior_summary(const std::vector<std::vector<double>>& curves, double alpha);

enum class ContrastType { ratio, difference };

struct ContrastResult {
  std::vector<std::vector<double>> values;  // per draw per grid point
  std::vector<bool> undefined;              // grid points with a zero denominator
  CurveSummary summary;
};

ContrastResult contrast(const GCompResult& numer, const GCompResult& denom, ContrastType type,
                        double alpha);

enum class RuleObjective { survival, utility };

struct OptimalRulePosterior {
  std::vector<ThresholdRuleParams> grid;
  std::vector<int> argmax;  // per draw, lowest index on ties
  std::vector<double> pmf;
  std::vector<int> credible_set;  // cell indices, ascending
  int mode_index = 0;
  double level = 0.9;
  long tied_draws = 0;
};

// Exhaustive grid search per draw with common random numbers across cells.
OptimalRulePosterior optimize_rule(const DrawSet& draws,
                                   std::span<const ThresholdRuleParams> grid,
                                   RuleObjective objective, const FeasibleSet& feasible,
                                   const GCompConfig& config, double alpha);

// Highest-mass cells whose cumulative probability reaches the level; ties at
// the cut are all included. Returns ascending cell indices.
std::vector<int> hdi_set(std::span<const double> pmf, double level);

}  // namespace dtr
