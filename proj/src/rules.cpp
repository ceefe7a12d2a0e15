#include "dtr/rules.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dtr/io.hpp"

namespace dtr {

FeasibleSet FeasibleSet::all(int K) {
  FeasibleSet f;
  f.allowed.assign(static_cast<std::size_t>(K), {0, 1});
  return f;
}

FeasibleSet FeasibleSet::no_act_course3(int K) {
  FeasibleSet f = all(K);
  if (K >= 3) f.allowed[2] = {0};
  return f;
}

bool FeasibleSet::is_allowed(int k, int a) const {
  const auto& opts = at(k);
  return std::find(opts.begin(), opts.end(), a) != opts.end();
}

const std::vector<int>& FeasibleSet::at(int k) const {
  if (k < 1 || k > static_cast<int>(allowed.size()))
    throw ConfigError("feasible set has no course " + std::to_string(k));
  return allowed[k - 1];
}

void FeasibleSet::validate() const {
  for (std::size_t k = 0; k < allowed.size(); ++k)
    if (allowed[k].empty())
      throw ConfigError("empty feasible set at course " + std::to_string(k + 1));
}

DecisionRule threshold_rule(ThresholdRuleParams params) {
  DecisionRule r;
  std::ostringstream name;
  name << "threshold(" << format_double(params.tau1) << "," << format_double(params.tau2) << ")";
  r.name = name.str();
  r.impl = EfThresholdRule{params};
  return r;
}

DecisionRule fixed_rule(std::vector<int> treatments) {
  if (treatments.empty()) throw ConfigError("fixed rule needs at least one treatment");
  DecisionRule r;
  std::ostringstream name;
  name << "fixed(";
  for (std::size_t i = 0; i < treatments.size(); ++i) name << (i ? "," : "") << treatments[i];
  name << ")";
  r.name = name.str();
  r.impl = FixedRule{std::move(treatments)};
  return r;
}

DecisionRule assign_if_below(std::string covariate, double cut) {
  DecisionRule r;
  r.name = "below(" + covariate + "," + format_double(cut) + ")";
  r.impl = AssignIfBelowRule{std::move(covariate), cut};
  return r;
}

DecisionRule parse_rule(const std::string& text) {
  const std::string t = trim(text);
  auto open = t.find('(');
  if (open == std::string::npos || t.back() != ')')
    throw ParseError("rule must look like name(args): " + text);
  const std::string kind = t.substr(0, open);
  const std::string args = t.substr(open + 1, t.size() - open - 2);
  if (kind == "threshold") {
    auto v = parse_number_list(args);
    if (v.size() != 2) throw ParseError("threshold rule needs (tau1,tau2)");
    return threshold_rule({v[0], v[1]});
  }
  if (kind == "fixed") {
    auto v = parse_number_list(args);
    std::vector<int> a;
    for (double x : v) {
      if (x != 0.0 && x != 1.0) throw ParseError("fixed rule entries must be 0 or 1");
      a.push_back(static_cast<int>(x));
    }
    return fixed_rule(a);
  }
  if (kind == "below") {
    auto parts = split(args, ',');
    if (parts.size() != 2) throw ParseError("below rule needs (covariate,cut)");
    return assign_if_below(trim(parts[0]), std::stod(trim(parts[1])));
  }
  throw ParseError("unknown rule kind '" + kind + "'");
}

int raw_decision(const DecisionRule& rule, const History& h, int k,
                 const CovariateSchema& schema) {
  if (h.courses() < k) throw ValidationError("history does not reach course " + std::to_string(k));
  if (std::holds_alternative<FixedRule>(rule.impl)) {
    const auto& f = std::get<FixedRule>(rule.impl);
    const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(k) - 1,
                                                  f.treatments.size() - 1);
    return f.treatments[idx];
  }
  if (std::holds_alternative<AssignIfBelowRule>(rule.impl)) {
    const auto& b = std::get<AssignIfBelowRule>(rule.impl);
    const int idx = schema.index_of(b.covariate);
    if (idx < 0) throw ConfigError("rule covariate '" + b.covariate + "' not in schema");
    return h.rows[k - 1][static_cast<std::size_t>(idx)] < b.cut ? 1 : 0;
  }
  const auto& tr = std::get<EfThresholdRule>(rule.impl);
  const int ef = schema.ef_index();
  if (ef < 0) throw ConfigError("threshold rule needs schema.ef_covariate");
  const double ef_now = h.rows[k - 1][static_cast<std::size_t>(ef)];
  const double ef_base = h.rows[0][static_cast<std::size_t>(ef)];
  if (k == 3) return 0;
  if (k == 1) return ef_now < tr.tau.tau2 ? 0 : 1;
  const bool declined = (ef_now / ef_base - 1.0) < tr.tau.tau1;
  const bool low = ef_now < tr.tau.tau2;
  return (declined && low) ? 0 : 1;
}

RuleDecision apply_rule(const DecisionRule& rule, const History& h, const FeasibleSet& feasible,
                        int k, const CovariateSchema& schema) {
  const auto& opts = feasible.at(k);
  if (opts.empty()) throw ConfigError("empty feasible set at course " + std::to_string(k));
  const int raw = raw_decision(rule, h, k, schema);
  if (std::find(opts.begin(), opts.end(), raw) != opts.end()) return {raw, false};
  if (opts.size() == 1) return {opts.front(), true};
  throw ConfigError("rule output " + std::to_string(raw) + " infeasible at course " +
                    std::to_string(k) + " and no unique fallback");
}

std::vector<ThresholdRuleParams> rule_grid(std::span<const double> tau1_values,
                                           std::span<const double> tau2_values) {
  if (tau1_values.empty() || tau2_values.empty())
    throw ConfigError("rule grid needs nonempty tau1 and tau2 lists");
  std::vector<ThresholdRuleParams> grid;
  grid.reserve(tau1_values.size() * tau2_values.size());
  for (double t1 : tau1_values)
    for (double t2 : tau2_values) grid.push_back({t1, t2});
  return grid;
}

}  // namespace dtr
