#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dtr/data.hpp"

namespace dtr {

struct FeasibleSet {
  // allowed[k-1] lists the treatments available at course k
  std::vector<std::vector<int>> allowed;

  static FeasibleSet all(int K);
  // course 3 restricted to {0}, as in the four-course ACT protocol
  static FeasibleSet no_act_course3(int K);

  bool is_allowed(int k, int a) const;
  const std::vector<int>& at(int k) const;
  void validate() const;
};

struct ThresholdRuleParams {
  double tau1 = 0.0;  // relative EF decline threshold, <= 0
  double tau2 = 0.5;  // absolute EF threshold in (0,1)
};

// Withhold ACT at course k when EF_k/EF_1 - 1 < tau1 AND EF_k < tau2
// (both strict). Course 1 uses the absolute condition only; course 3 always
// withholds.
struct EfThresholdRule {
  ThresholdRuleParams tau;
};

struct FixedRule {
  std::vector<int> treatments;  // a_k by course, last entry reused past the end
};

// a_k = 1 when the named covariate's current value is below the cut
struct AssignIfBelowRule {
  std::string covariate;
  double cut = 0.0;
};

struct DecisionRule {
  std::string name;
  std::variant<FixedRule, EfThresholdRule, AssignIfBelowRule> impl;
};

DecisionRule threshold_rule(ThresholdRuleParams params);
DecisionRule fixed_rule(std::vector<int> treatments);
DecisionRule assign_if_below(std::string covariate, double cut);

// "threshold(-0.1,0.5)" | "fixed(1,0,0,1)" | "below(x,0)"
DecisionRule parse_rule(const std::string& text);

// raw decision before feasibility; h must contain course-k covariates
int raw_decision(const DecisionRule& rule, const History& h, int k,
                 const CovariateSchema& schema);

struct RuleDecision {
  int treatment = 0;
  bool coerced = false;  // raw output was infeasible and got overridden
};

// Applies the rule and coerces an infeasible output to the lone feasible
// option; throws ConfigError when the feasible set is empty or ambiguous.
RuleDecision apply_rule(const DecisionRule& rule, const History& h, const FeasibleSet& feasible,
                        int k, const CovariateSchema& schema);

// Cartesian product, tau1 major, tau2 minor; deterministic order
std::vector<ThresholdRuleParams> rule_grid(std::span<const double> tau1_values,
                                           std::span<const double> tau2_values);

}  // namespace dtr
