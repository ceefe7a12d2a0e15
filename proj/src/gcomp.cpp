#include "dtr/gcomp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dtr/io.hpp"
#include "dtr/parallel.hpp"

namespace dtr {

namespace {

constexpr std::uint64_t kTrajectoryTag = 0x67636f6dULL;  // substream domain

std::size_t sample_index(std::span<const double> cdf, double u) {
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<double> cumulative_weights(std::span<const double> w) {
  std::vector<double> cdf(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    cdf[i] = acc;
  }
  if (!cdf.empty()) cdf.back() = std::max(cdf.back(), 1.0);
  return cdf;
}

}  // namespace

void GCompConfig::validate() const {
  if (B < 1) throw ConfigError("gcomp: B must be >= 1");
  if (grid.empty()) throw ConfigError("gcomp: empty time grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ConfigError("gcomp: time grid must be ascending");
  if (threads < 1) throw ConfigError("gcomp: threads must be >= 1");
}

double GCompConfig::reference_time() const { return t_ref > 0.0 ? t_ref : grid.back(); }

namespace {

struct TrajectoryScratch {
  std::vector<double> f1_cdf;
};

Trajectory simulate_one(const FitMeta& meta, const ParameterDraw& draw, const DecisionRule& rule,
                        const FeasibleSet& feasible, RngStream& rng,
                        const std::vector<double>& f1_cdf) {
  const CovariateSchema& schema = meta.schema;
  const int K = schema.K;
  const auto tv_idx = schema.time_varying_indices();
  const double inf = std::numeric_limits<double>::infinity();

  Trajectory traj;
  History& h = traj.path;
  double elapsed = 0.0;
  traj.death_time = inf;

  for (int k = 1; k <= K; ++k) {
    if (k == 1) {
      const std::size_t idx = sample_index(f1_cdf, rng.uniform());
      h.rows.push_back(meta.baseline_rows[idx]);
    } else {
      const auto z = encode_confounder_design(h, k, schema);
      std::vector<double> row = h.rows.front();  // baselines carry forward
      const auto& conf = draw.courses[k - 1].confounders;
      for (std::size_t p = 0; p < tv_idx.size(); ++p)
        row[tv_idx[p]] = simulate_covariate(conf.submodels[p], z, rng);
      h.rows.push_back(std::move(row));
    }
    traj.courses = k;
    const int a_k = apply_rule(rule, h, feasible, k, schema).treatment;
    h.a.push_back(a_k);
    const auto x = encode_hazard_design(h, k, a_k, schema);
    const auto& course = draw.courses[k - 1];
    if (k < K) {
      const double wy = sample_waiting_time(*course.next, x, rng.uniform());
      const double wt = sample_waiting_time(course.death, x, rng.uniform());
      if (wy == inf && wt == inf) return traj;  // beyond a truncated horizon
      if (wt < wy) {
        traj.death_time = elapsed + wt;
        return traj;
      }
      elapsed += wy;
      h.w.push_back(wy);
    } else {
      const double wt = sample_waiting_time(course.death, x, rng.uniform());
      if (wt == inf) return traj;
      traj.death_time = elapsed + wt;
      h.w.push_back(wt);
    }
  }
  return traj;
}

}  // namespace

Trajectory simulate_trajectory(const FitMeta& meta, const ParameterDraw& draw,
                               const DecisionRule& rule, const FeasibleSet& feasible,
                               RngStream& rng) {
  const auto f1_cdf = cumulative_weights(draw.f1_weights);
  return simulate_one(meta, draw, rule, feasible, rng, f1_cdf);
}

GCompResult estimate_survival(const DrawSet& draws, const DecisionRule& rule,
                              const FeasibleSet& feasible, const GCompConfig& config) {
  config.validate();
  if (draws.draws.empty()) throw ConfigError("gcomp: no posterior draws");
  const auto& meta = draws.meta;
  const int ef = meta.schema.ef_index();
  const double t_ref = config.reference_time();
  const std::size_t M = draws.draws.size();
  const std::size_t G = config.grid.size();

  GCompResult res;
  res.grid = config.grid;
  res.t_ref = t_ref;
  res.s = config.s;
  res.psi.assign(M, std::vector<double>(G, 0.0));
  res.phi.assign(M, 0.0);
  res.utility.assign(M, 0.0);
  res.extrapolated.assign(G, false);
  for (std::size_t g = 0; g < G; ++g)
    res.extrapolated[g] = config.grid[g] > meta.max_observed_death;

  parallel_for(M, config.threads, [&](std::size_t mi) {
    const auto& draw = draws.draws[mi];
    const auto f1_cdf = cumulative_weights(draw.f1_weights);
    std::vector<long> surv_count(G, 0);
    long ref_count = 0, phi_count = 0;
    for (int b = 0; b < config.B; ++b) {
      RngStream rng = RngStream::derive(
          config.seed, {kTrajectoryTag, static_cast<std::uint64_t>(draw.m),
                        static_cast<std::uint64_t>(b)});
      const Trajectory traj = simulate_one(meta, draw, rule, feasible, rng, f1_cdf);
      for (std::size_t g = 0; g < G; ++g)
        if (traj.death_time > config.grid[g]) ++surv_count[g];
      if (traj.death_time > t_ref) ++ref_count;
      if (ef >= 0) {
        for (int k = std::max(2, config.phi_min_course); k <= traj.courses; ++k) {
          if (traj.path.rows[k - 1][ef] < config.s) {
            ++phi_count;
            break;
          }
        }
      }
    }
    for (std::size_t g = 0; g < G; ++g)
      res.psi[mi][g] = static_cast<double>(surv_count[g]) / config.B;
    res.phi[mi] = static_cast<double>(phi_count) / config.B;
    res.utility[mi] = static_cast<double>(ref_count) / config.B - res.phi[mi];
  });
  return res;
}

CurveSummary posterior_summary(const std::vector<std::vector<double>>& curves, double alpha) {
  if (curves.size() < 2) throw ConfigError("posterior_summary needs at least 2 draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0,1)");
  const std::size_t G = curves.front().size();
  CurveSummary s;
  s.mean.assign(G, std::numeric_limits<double>::quiet_NaN());
  s.lower = s.mean;
  s.upper = s.mean;
  std::vector<double> col;
  for (std::size_t g = 0; g < G; ++g) {
    col.clear();
    for (const auto& c : curves)
      if (std::isfinite(c[g])) col.push_back(c[g]);
    if (col.empty()) continue;
    s.mean[g] = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
    s.lower[g] = quantile(col, alpha / 2.0);
    s.upper[g] = quantile(col, 1.0 - alpha / 2.0);
  }
  return s;
}

ContrastResult contrast(const GCompResult& numer, const GCompResult& denom, ContrastType type,
                        double alpha) {
  if (numer.grid != denom.grid || numer.psi.size() != denom.psi.size())
    throw ConfigError("contrast requires matching grids and draw counts");
  const std::size_t M = numer.psi.size();
  const std::size_t G = numer.grid.size();
  ContrastResult out;
  out.values.assign(M, std::vector<double>(G, 0.0));
  out.undefined.assign(G, false);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t g = 0; g < G; ++g) {
      if (type == ContrastType::difference) {
        out.values[m][g] = numer.psi[m][g] - denom.psi[m][g];
      } else if (denom.psi[m][g] == 0.0) {
        out.values[m][g] = std::numeric_limits<double>::quiet_NaN();
        out.undefined[g] = true;
      } else {
        out.values[m][g] = numer.psi[m][g] / denom.psi[m][g];
      }
    }
  }
  out.summary = posterior_summary(out.values, alpha);
  return out;
}

OptimalRulePosterior optimize_rule(const DrawSet& draws,
                                   std::span<const ThresholdRuleParams> grid,
                                   RuleObjective objective, const FeasibleSet& feasible,
                                   const GCompConfig& config, double alpha) {
  if (grid.empty()) throw ConfigError("optimize_rule: empty rule grid");
  if (draws.draws.empty()) throw ConfigError("optimize_rule: no posterior draws");
  const auto& meta = draws.meta;
  const int ef = meta.schema.ef_index();
  if (ef < 0) throw ConfigError("optimize_rule: schema has no ef covariate");
  const double t_ref = config.reference_time();
  const std::size_t M = draws.draws.size();
  const std::size_t C = grid.size();

  std::vector<DecisionRule> rules;
  rules.reserve(C);
  for (const auto& tau : grid) rules.push_back(threshold_rule(tau));

  OptimalRulePosterior post;
  post.grid.assign(grid.begin(), grid.end());
  post.argmax.assign(M, 0);
  post.level = 1.0 - alpha;
  std::vector<long> ties(M, 0);

  parallel_for(M, config.threads, [&](std::size_t mi) {
    const auto& draw = draws.draws[mi];
    const auto f1_cdf = cumulative_weights(draw.f1_weights);
    std::vector<long> ref_count(C, 0), phi_count(C, 0);
    for (int b = 0; b < config.B; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        // one substream per (draw, trajectory), reused across grid cells
        RngStream rng = RngStream::derive(
            config.seed, {kTrajectoryTag, static_cast<std::uint64_t>(draw.m),
                          static_cast<std::uint64_t>(b)});
        const Trajectory traj = simulate_one(meta, draw, rules[c], feasible, rng, f1_cdf);
        if (traj.death_time > t_ref) ++ref_count[c];
        for (int k = std::max(2, config.phi_min_course); k <= traj.courses; ++k) {
          if (traj.path.rows[k - 1][ef] < config.s) {
            ++phi_count[c];
            break;
          }
        }
      }
    }
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    long tied = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const double psi = static_cast<double>(ref_count[c]) / config.B;
      const double val = objective == RuleObjective::survival
                             ? psi
                             : psi - static_cast<double>(phi_count[c]) / config.B;
      if (val > best_val) {
        best = static_cast<int>(c);
        best_val = val;
        tied = 0;
      } else if (val == best_val) {
        ++tied;
      }
    }
    post.argmax[mi] = best;
    ties[mi] = tied;
  });

  post.tied_draws = std::count_if(ties.begin(), ties.end(), [](long t) { return t > 0; });
  post.pmf.assign(C, 0.0);
  for (int a : post.argmax) post.pmf[a] += 1.0 / static_cast<double>(M);
  post.credible_set = hdi_set(post.pmf, post.level);
  post.mode_index = static_cast<int>(
      std::max_element(post.pmf.begin(), post.pmf.end()) - post.pmf.begin());
  return post;
}

std::vector<int> hdi_set(std::span<const double> pmf, double level) {
  double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("hdi_set: pmf must sum to 1");
  if (level < 0.0 || level > 1.0) throw ConfigError("hdi_set: level must be in [0,1]");
  std::vector<int> order(pmf.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return pmf[a] > pmf[b]; });
  double cum = 0.0;
  std::size_t cut = 0;
  for (; cut < order.size(); ++cut) {
    cum += pmf[order[cut]];
    if (cum >= level - 1e-9) break;
  }
  if (cut == order.size()) cut = order.size() - 1;
  // include every cell tied with the last one in
  const double edge = pmf[order[cut]];
  std::size_t end = cut + 1;
  while (end < order.size() && std::abs(pmf[order[end]] - edge) <= 1e-12) ++end;
  std::vector<int> cells(order.begin(), order.begin() + end);
  std::sort(cells.begin(), cells.end());
  return cells;
}

}  // namespace dtr
