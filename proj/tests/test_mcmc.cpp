#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "dtr/mcmc.hpp"
#include "dtr/simgen.hpp"
#include "test_util.hpp"

using namespace dtr;

namespace {

// all-death exponential cohort with no covariates, K = 1
Cohort exponential_cohort(int n, double rate, std::uint64_t seed) {
  CovariateSchema schema;
  schema.K = 1;
  schema.standardize = false;
  Cohort c;
  c.schema = schema;
  RngStream rng(seed);
  for (int i = 0; i < n; ++i) {
    SubjectRecord s;
    s.subject_id = "s" + std::to_string(i);
    s.courses.push_back({1, {}, 0, -std::log(rng.uniform()) / rate, kDeath});
    c.subjects.push_back(s);
  }
  return c;
}

double batch_means_se(const std::vector<double>& chain, int batches = 20) {
  const std::size_t b = chain.size() / batches;
  std::vector<double> means;
  for (int i = 0; i < batches; ++i) {
    double s = 0;
    for (std::size_t j = i * b; j < (i + 1) * b; ++j) s += chain[j];
    means.push_back(s / b);
  }
  return std::sqrt(dtr_test::var_of(means) / batches);
}

}  // namespace

TEST_CASE("risk-set exposures: interval splits and event placement") {
  TimePartition part{{0.0, 1.0, 2.0}};
  const std::vector<double> w = {1.5, 0.4, 1.5};
  const std::vector<int> dy = {0, 0, 1};
  const std::vector<int> dt = {1, 0, 0};
  ExposureSet ex = risk_set_exposures(w, dy, dt, part, TailPolicy::extend_last);

  CHECK(ex.exposure(0, 0) == doctest::Approx(1.0));
  CHECK(ex.exposure(0, 1) == doctest::Approx(0.5));
  CHECK(ex.events_t[1] == 1);
  CHECK(ex.events_y[1] == 1);

  CHECK(ex.exposure(1, 0) == doctest::Approx(0.4));
  CHECK(ex.exposure(1, 1) == 0.0);
  CHECK(ex.events_t[0] + ex.events_y[0] == 0);

  CHECK(ex.exposure(2, 0) == doctest::Approx(1.0));
  CHECK(ex.exposure(2, 1) == doctest::Approx(0.5));

  for (int i = 0; i < 3; ++i) CHECK(ex.total_exposure(i) == doctest::Approx(w[i]));

  // beyond the last knot under both tail policies
  ExposureSet ext =
      risk_set_exposures(std::vector<double>{3.0}, std::vector<int>{0}, std::vector<int>{1},
                         part, TailPolicy::extend_last);
  CHECK(ext.total_exposure(0) == doctest::Approx(3.0));
  ExposureSet trunc =
      risk_set_exposures(std::vector<double>{3.0}, std::vector<int>{0}, std::vector<int>{1},
                         part, TailPolicy::truncate);
  CHECK(trunc.total_exposure(0) == doctest::Approx(2.0));
}

TEST_CASE("gibbs rate update: conjugate posterior in a single interval") {
  // du = 1, alpha = 1, star = 1, D = 3, R = 2  ->  Gamma(4, 3)
  TimePartition part{{0.0, 1.0}};
  ExposureSet ex = risk_set_exposures(std::vector<double>{2.0}, std::vector<int>{0},
                                      std::vector<int>{0}, part, TailPolicy::extend_last);
  const std::vector<int> events = {3};
  const std::vector<double> rw = {1.0};
  GammaProcessPrior prior{1.0, 1.0};
  RngStream rng(55);
  const int N = 100000;
  std::vector<double> draws;
  for (int i = 0; i < N; ++i)
    draws.push_back(gibbs_update_rates(ex, events, rw, prior, rng)[0]);
  const double mean = dtr_test::mean_of(draws);
  const double se = std::sqrt(4.0 / 9.0 / N);
  CHECK(std::abs(mean - 4.0 / 3.0) < 3.5 * se);
  CHECK(dtr_test::var_of(draws) == doctest::Approx(4.0 / 9.0).epsilon(0.05));
}

TEST_CASE("gibbs rate update: no data returns the prior") {
  TimePartition part{{0.0, 0.5, 2.0}};
  ExposureSet ex = risk_set_exposures({}, {}, {}, part, TailPolicy::extend_last);
  const std::vector<int> events = {0, 0};
  GammaProcessPrior prior{2.0, 1.5};
  RngStream a(7), b(7);
  const int N = 50000;
  for (int j = 0; j < 2; ++j) {
    std::vector<double> post, pri;
    for (int i = 0; i < N; ++i) {
      post.push_back(gibbs_update_rates(ex, events, std::vector<double>{}, prior, a)[j]);
      pri.push_back(sample_gp_prior(prior, part, b)[j]);
    }
    CHECK(dtr_test::ks_distance(post, pri) < 0.02);
  }
}

TEST_CASE("gibbs rate update: doubling exposures halves the mean when events dominate") {
  TimePartition part{{0.0, 1.0}};
  GammaProcessPrior prior{0.01, 1.0};
  const std::vector<int> events = {1000};
  RngStream rng(9);
  auto mean_with = [&](double total_w) {
    ExposureSet ex =
        risk_set_exposures(std::vector<double>{total_w}, std::vector<int>{0},
                           std::vector<int>{0}, part, TailPolicy::extend_last);
    std::vector<double> draws;
    for (int i = 0; i < 20000; ++i)
      draws.push_back(gibbs_update_rates(ex, events, std::vector<double>{1.0}, prior, rng)[0]);
    return dtr_test::mean_of(draws);
  };
  const double m1 = mean_with(500.0);
  const double m2 = mean_with(1000.0);
  CHECK(m2 < m1);
  CHECK(m1 / m2 == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("metropolis: zero-length step is always accepted") {
  AdaptiveProposal prop("test", 1, 1e-300);
  std::vector<double> state = {0.3};
  RngStream rng(3);
  for (int i = 0; i < 50; ++i)
    CHECK(mh_update(state, [](std::span<const double> v) { return -v[0] * v[0]; }, prop, rng) ==
          doctest::Approx(1.0));
  CHECK(state[0] == doctest::Approx(0.3));
}

TEST_CASE("metropolis with no data samples the prior") {
  // N(0, c) target; chain sd should approach sqrt(c)
  const double c = 0.49;
  AdaptiveProposal prop("prior", 1, 0.3);
  std::vector<double> state = {0.0};
  RngStream rng(17);
  auto lp = [&](std::span<const double> v) { return -v[0] * v[0] / (2.0 * c); };
  std::vector<double> chain;
  for (int i = 0; i < 2000; ++i) mh_update(state, lp, prop, rng);
  prop.freeze(1e-6);
  for (int i = 0; i < 30000; ++i) {
    mh_update(state, lp, prop, rng);
    chain.push_back(state[0]);
  }
  CHECK(std::sqrt(dtr_test::var_of(chain)) == doctest::Approx(std::sqrt(c)).epsilon(0.05));
  CHECK(std::abs(dtr_test::mean_of(chain)) < 0.03);
}

TEST_CASE("adapt_covariance: sample covariance scaling") {
  SUBCASE("recovers s_d * Sigma + eps I") {
    RngStream rng(23);
    // correlated 2-d normal draws
    std::vector<std::vector<double>> hist;
    const double s11 = 1.0, s22 = 0.25, rho = 0.6;
    for (int i = 0; i < 10000; ++i) {
      const double z1 = rng.normal(), z2 = rng.normal();
      const double x = std::sqrt(s11) * z1;
      const double y = std::sqrt(s22) * (rho * z1 + std::sqrt(1 - rho * rho) * z2);
      hist.push_back({x, y});
    }
    const double s_d = 2.38 * 2.38 / 2.0, eps = 1e-6;
    auto cov = adapt_covariance(hist, s_d, eps);
    CHECK(cov[0] == doctest::Approx(s_d * s11 + eps).epsilon(0.05));
    CHECK(cov[3] == doctest::Approx(s_d * s22 + eps).epsilon(0.05));
    CHECK(cov[1] == doctest::Approx(s_d * rho * std::sqrt(s11 * s22)).epsilon(0.08));
    CHECK(cov[1] == cov[2]);
  }
  SUBCASE("scalar block follows the Haario rule") {
    RngStream rng(29);
    std::vector<std::vector<double>> hist;
    for (int i = 0; i < 20000; ++i) hist.push_back({rng.normal(0.0, 0.5)});
    auto cov = adapt_covariance(hist, 2.38 * 2.38, 1e-6);
    CHECK(cov[0] == doctest::Approx(2.38 * 2.38 * 0.25 + 1e-6).epsilon(0.05));
  }
  SUBCASE("constant draws freeze to the diagonal fallback") {
    AdaptiveProposal prop("const", 2, 0.2);
    std::vector<double> state = {1.0, -1.0};
    RngStream rng(31);
    for (int i = 0; i < 100; ++i) prop.record(state, 0.234);
    prop.freeze(1e-6);
    // proposal still moves with the diagonal step
    std::vector<double> cand(2);
    prop.propose(state, cand, rng);
    CHECK(cand[0] != state[0]);
  }
}

TEST_CASE("piecewise-exponential log likelihood matches numeric integration") {
  PiecewiseHazardModel my;
  my.partition = {{0.0, 1.0, 2.5, 5.0}};
  my.rates = {0.2, 0.6, 0.15};
  my.beta = {0.4, -0.3};
  WeibullHazardModel mw;
  mw.shape = 1.6;
  mw.scale = 4.0;
  mw.beta = {0.4, -0.3};

  const std::vector<double> w = {0.8, 2.0, 3.3, 4.9, 6.2};
  const std::vector<int> d = {1, 0, 1, 0, 1};
  std::vector<double> X;
  RngStream rng(41);
  for (std::size_t i = 0; i < w.size(); ++i) {
    X.push_back(rng.normal());
    X.push_back(rng.bernoulli(0.5));
  }

  for (const HazardModel& m : {HazardModel{my}, HazardModel{mw}}) {
    const double ll = hazard_loglik(m, X, 2, w, d);
    double expect = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      std::span<const double> xi(X.data() + 2 * i, 2);
      if (d[i]) expect += std::log(hazard_at(m, w[i], xi));
      std::vector<double> breaks =
          std::holds_alternative<PiecewiseHazardModel>(m)
              ? std::get<PiecewiseHazardModel>(m).partition.knots
              : std::vector<double>{};
      expect -= dtr_test::integrate_piecewise(
          [&](double u) { return hazard_at(m, u, xi); }, 0.0, w[i], breaks, 4000);
    }
    CHECK(std::abs(ll - expect) < 1e-8);
  }
}

TEST_CASE("sampler recovers the conjugate posterior on exponential data") {
  Cohort c = exponential_cohort(20, 0.5, 2024);
  SamplerConfig cfg;
  cfg.iterations = 2500;
  cfg.burnin = 500;
  cfg.intervals = 1;
  cfg.alpha = 1.0;
  cfg.seed = 99;
  std::vector<double> rates;
  FitMeta meta = run_sampler(c, cfg, [&](const ParameterDraw& d) {
    rates.push_back(std::get<PiecewiseHazardModel>(d.courses[0].death).rates[0]);
  });
  REQUIRE(rates.size() == 2000);

  double sum_w = 0;
  for (const auto& s : c.subjects) sum_w += s.courses[0].waiting_time;
  const double du = meta.partitions_t[0].knots.back();
  const double star = meta.star_t[0];
  const double shape = cfg.alpha * star * du + 20.0;
  const double rate = cfg.alpha * du + sum_w;
  const double post_mean = shape / rate;
  const double post_var = shape / (rate * rate);

  // gibbs draws here are iid from the exact conjugate posterior
  const double se_mean = std::sqrt(post_var / rates.size());
  CHECK(std::abs(dtr_test::mean_of(rates) - post_mean) < 3.0 * se_mean);
  const double se_var = post_var * std::sqrt((2.0 + 6.0 / shape) / rates.size());
  CHECK(std::abs(dtr_test::var_of(rates) - post_var) < 3.0 * se_var);
}

TEST_CASE("sampler is bit-identical for a fixed seed") {
  SimDesign design = SimDesign::default_design();
  design.n = 60;
  Cohort c = generate_cohort(design, 5);
  SamplerConfig cfg;
  cfg.iterations = 120;
  cfg.burnin = 60;
  cfg.seed = 31337;
  std::ostringstream a, b;
  run_sampler(c, cfg, [&](const ParameterDraw& d) { a << draw_json(d) << "\n"; });
  run_sampler(c, cfg, [&](const ParameterDraw& d) { b << draw_json(d) << "\n"; });
  CHECK(a.str() == b.str());
  CHECK(!a.str().empty());
}

TEST_CASE("courses nobody reaches fall back to their priors") {
  // every subject dies at course 1, so course 2..4 blocks carry no data
  CovariateSchema schema = dtr_test::small_schema(3);
  Cohort c;
  c.schema = schema;
  RngStream rng(8);
  for (int i = 0; i < 25; ++i) {
    SubjectRecord s;
    s.subject_id = "s" + std::to_string(i);
    s.courses.push_back(
        {1, {0.4 + 0.4 * rng.uniform(), 1.0}, rng.bernoulli(0.5), 5.0 + rng.uniform(), kDeath});
    c.subjects.push_back(s);
  }
  SamplerConfig cfg;
  cfg.iterations = 4000;
  cfg.burnin = 1000;
  cfg.alpha = 1.0;
  cfg.seed = 12;
  std::vector<double> rate2, beta2, eta2;
  FitMeta meta = run_sampler(c, cfg, [&](const ParameterDraw& d) {
    const auto& m2 = std::get<PiecewiseHazardModel>(d.courses[1].death);
    rate2.push_back(m2.rates[0]);
    beta2.push_back(m2.beta[0]);
    eta2.push_back(std::get<BetaRegression>(d.courses[1].confounders.submodels[0]).eta[0]);
  });
  // prior on the rate: theta ~ Gamma(alpha*star*du, alpha), so E[rate] = star
  const double star = meta.star_t[1];
  const double du = meta.partitions_t[1].knots.back();
  const double prior_sd = std::sqrt(cfg.alpha * star * du) / (cfg.alpha * du);
  CHECK(std::abs(dtr_test::mean_of(rate2) - star) <
        4.0 * prior_sd / std::sqrt(static_cast<double>(rate2.size()) / 1.0));
  // beta and eta blocks should look like N(0, c)
  CHECK(std::sqrt(dtr_test::var_of(beta2)) == doctest::Approx(1.0).epsilon(0.12));
  CHECK(std::abs(dtr_test::mean_of(beta2)) < 0.1);
  CHECK(std::sqrt(dtr_test::var_of(eta2)) == doctest::Approx(1.0).epsilon(0.12));
}

TEST_CASE("logistic confounder posterior matches a long reference chain") {
  // K = 2, one binary time-varying covariate
  CovariateSchema schema;
  schema.K = 2;
  schema.covariates = {{"v", CovariateType::binary, true, 0.0, 1.0}};
  schema.standardize = false;
  schema.w_cutpoints = {20, 35, 50};

  const std::vector<double> eta_true = {0.3, -0.5, 0.4, 0.2, -0.2, 0.1};
  Cohort c;
  c.schema = schema;
  RngStream gen(71);
  for (int i = 0; i < 400; ++i) {
    SubjectRecord s;
    s.subject_id = "s" + std::to_string(i);
    const double v1 = gen.bernoulli(0.5);
    const int a1 = gen.bernoulli(0.5);
    const double w1 = 10.0 + 55.0 * gen.uniform();
    s.courses.push_back({1, {v1}, a1, w1, kNextTreatment});
    History h = history(SubjectRecord{s.subject_id, {s.courses[0]}}, 1);
    const auto z = encode_confounder_design(h, 2, schema);
    const double v2 = gen.bernoulli(logistic(dot(eta_true, z)));
    s.courses.push_back({2, {v2}, gen.bernoulli(0.5), 5.0 + 20.0 * gen.uniform(), kDeath});
    c.subjects.push_back(s);
  }

  SamplerConfig cfg;
  cfg.iterations = 7000;
  cfg.burnin = 2000;
  cfg.seed = 314;
  std::vector<std::vector<double>> eta_draws;
  run_sampler(c, cfg, [&](const ParameterDraw& d) {
    eta_draws.push_back(std::get<LogisticRegression>(d.courses[1].confounders.submodels[0]).eta);
  });

  // reference: plain random-walk chain on the same logistic posterior, 10x longer
  std::vector<std::vector<double>> Z;
  std::vector<double> vals;
  for (const auto& s : c.subjects) {
    Z.push_back(encode_confounder_design(history(s, 2), 2, schema));
    vals.push_back(s.courses[1].covariates[0]);
  }
  auto logpost = [&](const std::vector<double>& e) {
    double lp = 0;
    for (std::size_t i = 0; i < Z.size(); ++i) {
      const double t = dot(e, Z[i]);
      lp += vals[i] != 0.0 ? -std::log1p(std::exp(-t)) : -t - std::log1p(std::exp(-t));
    }
    for (double x : e) lp -= x * x / 2.0;
    return lp;
  };
  RngStream ref_rng(999);
  std::vector<double> state(6, 0.0);
  double lp_cur = logpost(state);
  std::vector<std::vector<double>> ref_draws;
  const int ref_total = 10 * 5000 + 5000;
  for (int it = 0; it < ref_total; ++it) {
    std::vector<double> cand = state;
    for (auto& x : cand) x += 0.07 * ref_rng.normal();
    const double lp_cand = logpost(cand);
    if (std::log(ref_rng.uniform()) < lp_cand - lp_cur) {
      state = cand;
      lp_cur = lp_cand;
    }
    if (it >= 5000) ref_draws.push_back(state);
  }

  for (int j = 0; j < 6; ++j) {
    std::vector<double> fit_j, ref_j;
    for (const auto& e : eta_draws) fit_j.push_back(e[j]);
    for (const auto& e : ref_draws) ref_j.push_back(e[j]);
    const double se = std::sqrt(std::pow(batch_means_se(fit_j), 2) +
                                std::pow(batch_means_se(ref_j), 2));
    CHECK(std::abs(dtr_test::mean_of(fit_j) - dtr_test::mean_of(ref_j)) < 3.5 * se + 0.01);
  }
}

TEST_CASE("draws round-trip through ndjson") {
  SimDesign design = SimDesign::default_design();
  design.n = 40;
  Cohort c = generate_cohort(design, 77);
  SamplerConfig cfg;
  cfg.iterations = 60;
  cfg.burnin = 30;
  cfg.seed = 5;
  DrawSet set;
  set.meta = run_sampler(c, cfg, [&](const ParameterDraw& d) { set.draws.push_back(d); });

  const auto path = std::filesystem::temp_directory_path() / "dtr_test_draws.ndjson";
  write_draws_ndjson(path, set);
  DrawSet back = read_draws_ndjson(path);
  REQUIRE(back.draws.size() == set.draws.size());
  CHECK(draws_meta_json(back.meta) == draws_meta_json(set.meta));
  for (std::size_t i = 0; i < set.draws.size(); ++i)
    CHECK(draw_json(back.draws[i]) == draw_json(set.draws[i]));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".meta.json");
}

TEST_CASE("adapted acceptance rates stay in the workable band") {
  SimDesign design = SimDesign::default_design();
  design.n = 200;
  Cohort c = generate_cohort(design, 404);
  SamplerConfig cfg;
  cfg.iterations = 1500;
  cfg.burnin = 700;
  cfg.seed = 21;
  SamplerDiagnostics diag;
  run_sampler(c, cfg, [](const ParameterDraw&) {}, &diag);
  int checked = 0;
  for (const auto& [label, rate] : diag.acceptance_rates) {
    if (label.rfind("beta.", 0) == 0 || label.rfind("eta.", 0) == 0) {
      INFO(label, " rate ", rate);
      CHECK(rate > 0.1);
      CHECK(rate < 0.5);
      ++checked;
    }
  }
  CHECK(checked >= 10);
}
