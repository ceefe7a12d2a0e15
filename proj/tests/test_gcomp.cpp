#include <cmath>

#include "doctest.h"
#include "dtr/gcomp.hpp"
#include "test_util.hpp"

using namespace dtr;

namespace {

PiecewiseHazardModel constant_model(double rate, int design_dim, double treat_coef = 0.0) {
  PiecewiseHazardModel m;
  m.partition = {{0.0, 1000.0}};
  m.rates = {rate};
  m.beta.assign(static_cast<std::size_t>(design_dim), 0.0);
  if (!m.beta.empty()) m.beta.back() = treat_coef;  // treatment sits last
  return m;
}

// covariate-free DrawSet with constant hazards per course
DrawSet bare_drawset(int K, std::vector<double> lam_y, std::vector<double> lam_t,
                     double treat_coef = 0.0) {
  DrawSet set;
  set.meta.schema.K = K;
  set.meta.schema.standardize = false;
  set.meta.schema.w_cutpoints = {1, 2, 3};
  set.meta.n = 1;
  set.meta.baseline_rows = {{}};
  set.meta.max_observed_death = 1e9;
  ParameterDraw d;
  d.m = 1;
  for (int k = 1; k <= K; ++k) {
    CourseDraw cd;
    const int dim = model_design_dim(set.meta.schema, k) + 1;
    cd.death = constant_model(lam_t[k - 1], dim, treat_coef);
    if (k < K) cd.next = constant_model(lam_y[k - 1], dim, treat_coef);
    cd.confounders.course = k;
    d.courses.push_back(cd);
  }
  d.f1_weights = {1.0};
  set.draws.push_back(d);
  return set;
}

// one proportion covariate "ef"; course-2+ EF simulated from a Beta model
DrawSet ef_drawset(double lam_y, double lam_t, double ef_logit_mean, double phi,
                   double ef_baseline) {
  DrawSet set;
  set.meta.schema = dtr_test::small_schema(2);
  set.meta.n = 1;
  set.meta.baseline_rows = {{ef_baseline, 1.0}};
  set.meta.max_observed_death = 1e9;
  ParameterDraw d;
  d.m = 1;
  for (int k = 1; k <= 2; ++k) {
    CourseDraw cd;
    const int dim = model_design_dim(set.meta.schema, k) + 1;
    cd.death = constant_model(lam_t, dim);
    if (k < 2) cd.next = constant_model(lam_y, dim);
    cd.confounders.course = k;
    if (k == 2) {
      BetaRegression br;
      br.eta.assign(static_cast<std::size_t>(confounder_design_dim(set.meta.schema, 2)), 0.0);
      br.eta[0] = ef_logit_mean;
      br.phi = phi;
      cd.confounders.submodels.push_back(br);
    }
    d.courses.push_back(cd);
  }
  d.f1_weights = {1.0};
  set.draws.push_back(d);
  return set;
}

}  // namespace

TEST_CASE("single-course trajectories are exponential") {
  const double lam = 0.25;
  DrawSet set = bare_drawset(1, {}, {lam});
  const auto rule = fixed_rule({0});
  const auto feasible = FeasibleSet::all(1);
  RngStream rng(404);
  const int N = 100000;
  double sum = 0;
  for (int i = 0; i < N; ++i)
    sum += simulate_trajectory(set.meta, set.draws[0], rule, feasible, rng).death_time;
  const double se = (1.0 / lam) / std::sqrt(static_cast<double>(N));
  CHECK(std::abs(sum / N - 1.0 / lam) < 3.0 * se);
}

TEST_CASE("competing risks: course-2 entry follows the hazard ratio") {
  const double lam_y = 0.3, lam_t = 0.1;
  DrawSet set = bare_drawset(2, {lam_y, 0.0}, {lam_t, 0.2});
  const auto rule = fixed_rule({0, 0});
  const auto feasible = FeasibleSet::all(2);
  RngStream rng(11);
  const int N = 100000;
  int reached = 0;
  for (int i = 0; i < N; ++i)
    if (simulate_trajectory(set.meta, set.draws[0], rule, feasible, rng).courses == 2)
      ++reached;
  const double p = lam_y / (lam_y + lam_t);
  const double se = std::sqrt(p * (1 - p) / N);
  CHECK(std::abs(static_cast<double>(reached) / N - p) < 3.0 * se);
}

TEST_CASE("rules that never bind produce identical results") {
  DrawSet set = ef_drawset(0.25, 0.08, 0.4, 20.0, 0.6);
  GCompConfig cfg;
  cfg.grid = {1, 5, 10, 20};
  cfg.B = 4000;
  cfg.s = 0.5;
  cfg.seed = 7;
  const auto feasible = FeasibleSet::all(2);
  // a threshold rule that can never withhold (absolute condition impossible)
  const auto never = threshold_rule({-0.99, 1e-9});
  const auto always_fixed = fixed_rule({1, 1});
  const GCompResult a = estimate_survival(set, never, feasible, cfg);
  const GCompResult b = estimate_survival(set, always_fixed, feasible, cfg);
  CHECK(a.psi == b.psi);
  CHECK(a.phi == b.phi);
  CHECK(a.utility == b.utility);
}

TEST_CASE("survival at zero is exactly one; unreachable s gives zero phi") {
  DrawSet set = ef_drawset(0.3, 0.1, 0.0, 10.0, 0.6);
  GCompConfig cfg;
  cfg.grid = {0.0, 2.0, 8.0};
  cfg.B = 2000;
  cfg.s = 0.0;  // EF below 0 is impossible
  cfg.seed = 3;
  const GCompResult res = estimate_survival(set, fixed_rule({1, 1}), FeasibleSet::all(2), cfg);
  CHECK(res.psi[0][0] == 1.0);
  CHECK(res.phi[0] == 0.0);
  CHECK(res.utility[0] == res.psi[0].back());  // t_ref defaults to the last grid point
}

TEST_CASE("monte carlo survival matches the two-course quadrature oracle") {
  const double ly = 0.35, lt1 = 0.12, lt2 = 0.25;
  DrawSet set = bare_drawset(2, {ly, 0.0}, {lt1, lt2});
  GCompConfig cfg;
  cfg.grid = {0.5, 1, 2, 3, 4, 6, 8, 10, 13, 16};
  cfg.B = 100000;
  cfg.seed = 12;
  const GCompResult res =
      estimate_survival(set, fixed_rule({0, 0}), FeasibleSet::all(2), cfg);
  for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
    const double t = cfg.grid[g];
    // survive course 1 past t, or transition at u < t and survive t - u
    const double direct = std::exp(-(ly + lt1) * t);
    const double via2 = dtr_test::integrate_piecewise(
        [&](double u) { return ly * std::exp(-(ly + lt1) * u) * std::exp(-lt2 * (t - u)); },
        0.0, t, {}, 4000);
    CHECK(std::abs(res.psi[0][g] - (direct + via2)) < 0.01);
  }
}

TEST_CASE("per-draw curves are nonincreasing and bounded") {
  DrawSet set = ef_drawset(0.3, 0.1, 0.2, 8.0, 0.55);
  GCompConfig cfg;
  cfg.grid = {0.5, 1, 2, 4, 8, 16, 32};
  cfg.B = 3000;
  cfg.seed = 21;
  const GCompResult res =
      estimate_survival(set, threshold_rule({-0.1, 0.5}), FeasibleSet::all(2), cfg);
  for (const auto& curve : res.psi) {
    for (std::size_t g = 1; g < curve.size(); ++g) REQUIRE(curve[g] <= curve[g - 1]);
    for (double v : curve) REQUIRE((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("seed determinism and the per-draw utility identity") {
  DrawSet set = ef_drawset(0.3, 0.1, 0.0, 6.0, 0.52);
  GCompConfig cfg;
  cfg.grid = {1, 3, 9};
  cfg.t_ref = 3.0;
  cfg.B = 2000;
  cfg.s = 0.5;
  cfg.seed = 99;
  const auto rule = threshold_rule({-0.1, 0.5});
  const auto res1 = estimate_survival(set, rule, FeasibleSet::all(2), cfg);
  GCompConfig cfg4 = cfg;
  cfg4.threads = 4;
  const auto res2 = estimate_survival(set, rule, FeasibleSet::all(2), cfg4);
  CHECK(res1.psi == res2.psi);
  CHECK(res1.phi == res2.phi);
  for (std::size_t m = 0; m < res1.psi.size(); ++m)
    CHECK(res1.utility[m] == res1.psi[m][1] - res1.phi[m]);  // t_ref is grid point 1
}

TEST_CASE("posterior summary: percentile conventions") {
  SUBCASE("identical draws give a zero-width band") {
    std::vector<std::vector<double>> curves(8, {0.7, 0.5});
    const auto s = posterior_summary(curves, 0.05);
    CHECK(s.mean[0] == 0.7);
    CHECK(s.lower[0] == 0.7);
    CHECK(s.upper[1] == 0.5);
  }
  SUBCASE("linear-interpolation quantiles") {
    std::vector<std::vector<double>> curves = {{0.2}, {0.4}, {0.6}, {0.8}};
    const auto s = posterior_summary(curves, 0.5);
    CHECK(s.lower[0] == doctest::Approx(0.35));
    CHECK(s.upper[0] == doctest::Approx(0.65));
  }
  SUBCASE("band contains the median at every point") {
    RngStream rng(5);
    std::vector<std::vector<double>> curves;
    for (int i = 0; i < 200; ++i) curves.push_back({rng.uniform(), rng.normal()});
    for (double alpha : {0.05, 0.2, 0.5}) {
      const auto s = posterior_summary(curves, alpha);
      for (int g = 0; g < 2; ++g) {
        std::vector<double> col;
        for (auto& c : curves) col.push_back(c[g]);
        const double med = quantile(col, 0.5);
        CHECK(s.lower[g] <= med);
        CHECK(s.upper[g] >= med);
      }
    }
  }
}

TEST_CASE("contrasts: identities and zero-denominator flags") {
  DrawSet set = ef_drawset(0.3, 0.1, 0.0, 6.0, 0.52);
  GCompConfig cfg;
  cfg.grid = {1, 3, 9};
  cfg.B = 1000;
  cfg.seed = 13;
  const auto rule = threshold_rule({-0.1, 0.5});
  const auto res = estimate_survival(set, rule, FeasibleSet::all(2), cfg);

  SUBCASE("same rule: ratio one, difference zero") {
    // needs >= 2 draws for the summary; duplicate the draw
    DrawSet two = set;
    two.draws.push_back(two.draws[0]);
    two.draws[1].m = 2;
    const auto r2 = estimate_survival(two, rule, FeasibleSet::all(2), cfg);
    const auto ratio = contrast(r2, r2, ContrastType::ratio, 0.05);
    const auto diff = contrast(r2, r2, ContrastType::difference, 0.05);
    for (const auto& row : ratio.values)
      for (double v : row) CHECK(v == 1.0);
    for (const auto& row : diff.values)
      for (double v : row) CHECK(v == 0.0);
  }
  SUBCASE("difference equals (ratio - 1) times denominator") {
    DrawSet two = set;
    two.draws.push_back(two.draws[0]);
    two.draws[1].m = 2;
    GCompConfig other = cfg;
    other.seed = 14;
    const auto ra = estimate_survival(two, rule, FeasibleSet::all(2), cfg);
    const auto rb = estimate_survival(two, fixed_rule({0, 0}), FeasibleSet::all(2), other);
    const auto ratio = contrast(ra, rb, ContrastType::ratio, 0.05);
    const auto diff = contrast(ra, rb, ContrastType::difference, 0.05);
    for (std::size_t m = 0; m < ra.psi.size(); ++m)
      for (std::size_t g = 0; g < ra.grid.size(); ++g)
        if (!std::isnan(ratio.values[m][g]))
          CHECK(diff.values[m][g] ==
                doctest::Approx((ratio.values[m][g] - 1.0) * rb.psi[m][g]));
  }
  SUBCASE("zero denominator is flagged undefined") {
    DrawSet two = set;
    two.draws.push_back(two.draws[0]);
    two.draws[1].m = 2;
    auto ra = estimate_survival(two, rule, FeasibleSet::all(2), cfg);
    auto rb = ra;
    for (auto& row : rb.psi) row[2] = 0.0;
    const auto ratio = contrast(ra, rb, ContrastType::ratio, 0.05);
    CHECK(ratio.undefined[2]);
    CHECK_FALSE(ratio.undefined[0]);
  }
}

TEST_CASE("optimization: degenerate grid, dominance, and exact ties") {
  GCompConfig cfg;
  cfg.grid = {6.0};
  cfg.t_ref = 6.0;
  cfg.B = 1500;
  cfg.s = 0.5;
  cfg.seed = 31;
  const auto feasible = FeasibleSet::all(2);

  SUBCASE("single-cell grid carries all the mass") {
    DrawSet set = ef_drawset(0.3, 0.1, 0.0, 6.0, 0.52);
    const std::vector<ThresholdRuleParams> grid = {{-0.1, 0.5}};
    const auto post = optimize_rule(set, grid, RuleObjective::survival, feasible, cfg, 0.10);
    CHECK(post.pmf == std::vector<double>{1.0});
    CHECK(post.credible_set == std::vector<int>{0});
  }
  SUBCASE("a strongly protective treatment makes always-treat optimal") {
    // treatment multiplies the death hazard by exp(-3)
    DrawSet set = ef_drawset(0.3, 0.25, 0.0, 6.0, 0.52);
    for (auto& course : set.draws[0].courses) {
      std::get<PiecewiseHazardModel>(course.death).beta.back() = -3.0;
    }
    // cell 0 treats always (ef < 1e-9 impossible); cell 1 withholds on any decline
    const std::vector<ThresholdRuleParams> grid = {{-0.99, 1e-9}, {0.0, 0.999}};
    const auto post = optimize_rule(set, grid, RuleObjective::survival, feasible, cfg, 0.10);
    CHECK(post.argmax == std::vector<int>{0});
  }
  SUBCASE("identical cells tie exactly under common random numbers") {
    DrawSet set = ef_drawset(0.3, 0.1, 0.0, 6.0, 0.52);
    const std::vector<ThresholdRuleParams> grid = {{-0.1, 0.5}, {-0.1, 0.5}};
    const auto post = optimize_rule(set, grid, RuleObjective::survival, feasible, cfg, 0.10);
    CHECK(post.argmax == std::vector<int>{0});  // lowest index wins the tie
    CHECK(post.tied_draws == 1);
  }
}

TEST_CASE("hdi credible sets") {
  SUBCASE("forced ordering") {
    const std::vector<double> pmf = {0.5, 0.3, 0.2};
    CHECK(hdi_set(pmf, 0.8) == std::vector<int>{0, 1});
  }
  SUBCASE("uniform pmf ties include everything") {
    const std::vector<double> pmf = {0.25, 0.25, 0.25, 0.25};
    CHECK(hdi_set(pmf, 0.5) == std::vector<int>{0, 1, 2, 3});
  }
  SUBCASE("level one returns the support") {
    const std::vector<double> pmf = {0.6, 0.4, 0.0};
    const auto set = hdi_set(pmf, 1.0);
    CHECK(set.size() >= 2);
    CHECK(set[0] == 0);
    CHECK(set[1] == 1);
  }
  SUBCASE("mass must sum to one") {
    CHECK_THROWS_AS(hdi_set(std::vector<double>{0.5, 0.2}, 0.9), ConfigError);
  }
}

TEST_CASE("grid points beyond the observed death horizon are flagged") {
  DrawSet set = ef_drawset(0.3, 0.1, 0.0, 6.0, 0.52);
  set.meta.max_observed_death = 5.0;
  GCompConfig cfg;
  cfg.grid = {1, 5, 9};
  cfg.B = 200;
  cfg.seed = 2;
  const auto res = estimate_survival(set, fixed_rule({1, 1}), FeasibleSet::all(2), cfg);
  CHECK(res.extrapolated == std::vector<bool>{false, false, true});
}
