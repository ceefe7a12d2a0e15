#include "dtr/mcmc.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "dtr/io.hpp"
#include "json.hpp"

namespace dtr {

using nlohmann::json;

void SamplerConfig::validate() const {
  if (iterations <= 0) throw ConfigError("sampler: iterations must be positive");
  if (burnin <= 0 || burnin >= iterations)
    throw ConfigError("sampler: need 0 < burnin < iterations");
  if (thin < 1) throw ConfigError("sampler: thin must be >= 1");
  if (!(initial_step > 0)) throw ConfigError("sampler: initial_step must be > 0");
  if (!(alpha > 0)) throw ConfigError("sampler: alpha must be > 0");
  if (!(beta_prior_var > 0)) throw ConfigError("sampler: beta_prior_var must be > 0");
}

SamplerConfig SamplerConfig::from_keyvalues(const KeyValueFile& kv) {
  SamplerConfig c;
  c.iterations = kv.get_int("M", kv.get_int("iterations", c.iterations));
  c.burnin = kv.get_int("burnin", kv.get_int("M_star", c.burnin));
  c.thin = kv.get_int("thin", c.thin);
  c.initial_step = kv.get_double("initial_step", c.initial_step);
  c.adapt_jitter = kv.get_double("adapt_jitter", c.adapt_jitter);
  c.alpha = kv.get_double("alpha", c.alpha);
  c.beta_prior_var = kv.get_double("beta_prior_var", c.beta_prior_var);
  std::string base = kv.get_or("baseline", "gp");
  if (base == "gp" || base == "gamma_process")
    c.baseline = BaselineFamily::gamma_process;
  else if (base == "weibull")
    c.baseline = BaselineFamily::weibull;
  else
    throw ConfigError("baseline must be gp or weibull");
  c.intervals = kv.get_int("intervals", c.intervals);
  c.halve_partition = kv.get_bool("halve_partition", c.halve_partition);
  std::string tail = kv.get_or("tail", "extend");
  if (tail == "extend")
    c.tail = TailPolicy::extend_last;
  else if (tail == "truncate")
    c.tail = TailPolicy::truncate;
  else
    throw ConfigError("tail must be extend or truncate");
  c.shared_knots = kv.get_bool("shared_knots", c.shared_knots);
  c.validate();
  return c;
}

double ExposureSet::exposure(int i, int j) const {
  const int li = last_interval[i];
  if (j < li) return partition.width(j);
  if (j == li) return last_exposure[i];
  return 0.0;
}

double ExposureSet::total_exposure(int i) const {
  double tot = last_exposure[i];
  for (int j = 0; j < last_interval[i]; ++j) tot += partition.width(j);
  return tot;
}

ExposureSet risk_set_exposures(std::span<const double> w, std::span<const int> delta_y,
                               std::span<const int> delta_t, const TimePartition& partition,
                               TailPolicy tail) {
  partition.validate();
  const int J = partition.intervals();
  ExposureSet ex;
  ex.partition = partition;
  ex.tail = tail;
  ex.w.assign(w.begin(), w.end());
  ex.events_y.assign(J, 0);
  ex.events_t.assign(J, 0);
  ex.last_interval.resize(w.size());
  ex.last_exposure.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double wi = w[i];
    const int li = partition.interval_of(wi);
    ex.last_interval[i] = li;
    double e = wi - partition.knots[li];
    if (tail == TailPolicy::truncate) e = std::min(e, partition.width(li));
    ex.last_exposure[i] = e;
    if (delta_y[i]) ex.events_y[li] += 1;
    if (delta_t[i]) ex.events_t[li] += 1;
  }
  return ex;
}

std::vector<double> gibbs_update_rates(const ExposureSet& ex, std::span<const int> event_counts,
                                       std::span<const double> risk_weights,
                                       const GammaProcessPrior& prior, RngStream& rng) {
  const int J = ex.partition.intervals();
  // R_j = du_j * (sum of risk weights of subjects whose w passes interval j)
  //       + partial exposures of subjects ending inside interval j
  std::vector<double> ending_weight(J, 0.0), partial(J, 0.0);
  for (int i = 0; i < ex.subjects(); ++i) {
    const int li = ex.last_interval[i];
    ending_weight[li] += risk_weights[i];
    partial[li] += ex.last_exposure[i] * risk_weights[i];
  }
  std::vector<double> rates(J);
  double passing = 0.0;  // built from the right
  for (int j = J - 1; j >= 0; --j) {
    const double du = ex.partition.width(j);
    const double R = du * passing + partial[j];
    const double shape = prior.alpha * prior.star_rate * du + event_counts[j];
    const double rate = prior.alpha + R / du;
    const double theta = rng.gamma(shape, rate);
    rates[j] = std::max(theta / du, 1e-300);
    passing += ending_weight[j];
  }
  return rates;
}

std::vector<double> adapt_covariance(const std::vector<std::vector<double>>& history, double s_d,
                                     double jitter) {
  if (history.size() < 2) throw std::invalid_argument("adapt_covariance needs >= 2 draws");
  const int d = static_cast<int>(history.front().size());
  const int n = static_cast<int>(history.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& row : history)
    mean += Eigen::Map<const Eigen::VectorXd>(row.data(), d);
  mean /= static_cast<double>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& row : history) {
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(row.data(), d) - mean;
    cov += r * r.transpose();
  }
  cov /= static_cast<double>(n - 1);
  Eigen::MatrixXd out = s_d * cov + jitter * Eigen::MatrixXd::Identity(d, d);
  std::vector<double> flat(static_cast<std::size_t>(d) * d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) flat[static_cast<std::size_t>(r) * d + c] = out(r, c);
  return flat;
}

AdaptiveProposal::AdaptiveProposal(std::string label, int dim, double init_sd)
    : label_(std::move(label)), dim_(dim), init_sd_(init_sd) {}

void AdaptiveProposal::propose(std::span<const double> current, std::span<double> out,
                               RngStream& rng) {
  if (!frozen_) {
    const double step = init_sd_ * std::exp(log_step_);
    for (int i = 0; i < dim_; ++i) out[i] = current[i] + step * rng.normal();
    return;
  }
  // out = current + L z
  std::vector<double> z(dim_);
  for (int i = 0; i < dim_; ++i) z[i] = rng.normal();
  for (int i = 0; i < dim_; ++i) {
    double s = 0.0;
    for (int j = 0; j <= i; ++j) s += chol_[static_cast<std::size_t>(i) * dim_ + j] * z[j];
    out[i] = current[i] + s;
  }
}

void AdaptiveProposal::record(std::span<const double> draw, double acc_prob) {
  if (frozen_) {
    acc_sum_ += acc_prob;
    acc_n_ += 1;
    return;
  }
  // Robbins-Monro step-size tuning, burn-in only
  ++tuning_steps_;
  const double target = dim_ == 1 ? 0.44 : 0.234;
  log_step_ += (acc_prob - target) / std::sqrt(static_cast<double>(tuning_steps_));
  log_step_ = std::clamp(log_step_, -12.0, 12.0);
  history_.emplace_back(draw.begin(), draw.end());
}

void AdaptiveProposal::freeze(double jitter) {
  if (frozen_) return;
  frozen_ = true;
  const double s_d = 2.38 * 2.38 / std::max(1, dim_);
  const double fallback_sd = init_sd_ * std::exp(log_step_);
  chol_.assign(static_cast<std::size_t>(dim_) * dim_, 0.0);
  auto diagonal_fallback = [&] {
    for (int i = 0; i < dim_; ++i) chol_[static_cast<std::size_t>(i) * dim_ + i] = fallback_sd;
  };
  // covariance from the second half of burn-in, past the initial transient
  const std::size_t half = history_.size() / 2;
  std::vector<std::vector<double>> tail_draws(history_.begin() + half, history_.end());
  if (tail_draws.size() < 2) {
    diagonal_fallback();
    history_.clear();
    return;
  }
  auto cov = adapt_covariance(tail_draws, s_d, jitter);
  double trace = 0.0;
  for (int i = 0; i < dim_; ++i) trace += cov[static_cast<std::size_t>(i) * dim_ + i];
  Eigen::Map<Eigen::MatrixXd> covm(cov.data(), dim_, dim_);
  Eigen::LLT<Eigen::MatrixXd> llt(covm);
  if (llt.info() != Eigen::Success || !(trace > dim_ * jitter * 1.5)) {
    std::cerr << "warning: degenerate burn-in covariance for block " << label_
              << "; keeping diagonal proposal\n";
    diagonal_fallback();
  } else {
    Eigen::MatrixXd L = llt.matrixL();
    for (int r = 0; r < dim_; ++r)
      for (int c = 0; c <= r; ++c) chol_[static_cast<std::size_t>(r) * dim_ + c] = L(r, c);
  }
  history_.clear();
}

double AdaptiveProposal::post_freeze_acceptance() const {
  return acc_n_ > 0 ? acc_sum_ / static_cast<double>(acc_n_) : 0.0;
}

double mh_update(std::vector<double>& state,
                 const std::function<double(std::span<const double>)>& log_post,
                 AdaptiveProposal& proposal, RngStream& rng) {
  std::vector<double> cand(state.size());
  proposal.propose(state, cand, rng);
  const double lp_cur = log_post(state);
  const double lp_cand = log_post(cand);
  double acc = 0.0;
  if (std::isfinite(lp_cand)) acc = std::min(1.0, std::exp(lp_cand - lp_cur));
  if (rng.uniform() < acc) state = cand;
  proposal.record(state, acc);
  return acc;
}

double hazard_loglik(const HazardModel& m, std::span<const double> X, int p,
                     std::span<const double> w, std::span<const int> d) {
  const std::size_t n = w.size();
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> xi = X.subspan(i * static_cast<std::size_t>(p),
                                           static_cast<std::size_t>(p));
    const double lp = dot(model_beta(m), xi);
    if (d[i]) ll += std::log(baseline_hazard(m, w[i])) + lp;
    ll -= baseline_cumulative(m, w[i]) * std::exp(lp);
  }
  return ll;
}

namespace {

struct CoursePrep {
  int n = 0;
  int p = 0;  // hazard design dim (includes current treatment)
  int q = 0;  // confounder design dim
  std::vector<double> X;
  std::vector<double> w;
  std::vector<int> dy, dt;
  std::vector<double> Z;
  std::vector<std::vector<double>> tv_values;
};

std::span<const double> row(const std::vector<double>& M, int i, int p) {
  return std::span<const double>(M).subspan(static_cast<std::size_t>(i) * p,
                                            static_cast<std::size_t>(p));
}

struct HazardBlock {
  std::string label;
  int course = 1;
  BaselineFamily family = BaselineFamily::gamma_process;
  const CoursePrep* data = nullptr;
  const std::vector<int>* d = nullptr;  // event indicators for this cause
  std::vector<int> event_counts;        // per interval (GP only)
  ExposureSet ex;
  GammaProcessPrior prior;
  TailPolicy tail = TailPolicy::extend_last;
  // state
  std::vector<double> rates;
  std::vector<double> wb;  // {log shape, log scale}
  double wb_scale_prior_rate = 1.0;
  std::vector<double> beta;
  AdaptiveProposal prop_beta;
  AdaptiveProposal prop_wb;
  // scratch
  std::vector<double> risk_weight;  // exp(x beta)
  std::vector<double> cum0;         // baseline cumulative at w_i

  HazardModel to_model(double beta_prior_sd) const {
    if (family == BaselineFamily::gamma_process) {
      PiecewiseHazardModel m;
      m.partition = ex.partition;
      m.rates = rates;
      m.beta = beta;
      m.tail = tail;
      m.prior = prior;
      m.beta_prior_sd = beta_prior_sd;
      return m;
    }
    WeibullHazardModel m;
    m.shape = std::exp(wb[0]);
    m.scale = std::exp(wb[1]);
    m.beta = beta;
    m.beta_prior_sd = beta_prior_sd;
    return m;
  }
};

struct ConfounderBlock {
  std::string label;
  int course = 2;
  CovariateType type = CovariateType::continuous;
  const CoursePrep* data = nullptr;
  std::vector<double> values;
  std::vector<double> eta;
  double log_scale = 0.0;  // log phi (beta) or log sigma (gaussian)
  bool has_scale = false;
  AdaptiveProposal prop_eta;
  AdaptiveProposal prop_scale;

  ConfounderSubmodel to_submodel() const {
    switch (type) {
      case CovariateType::proportion:
        return BetaRegression{eta, std::exp(log_scale)};
      case CovariateType::binary:
        return LogisticRegression{eta};
      default:
        return GaussianRegression{eta, std::exp(log_scale)};
    }
  }
};

double confounder_loglik_sum(const ConfounderBlock& b, const ConfounderSubmodel& sub) {
  double ll = 0.0;
  for (int i = 0; i < b.data->n; ++i)
    ll += loglik_covariate(sub, row(b.data->Z, i, b.data->q), b.values[i]);
  return ll;
}

}  // namespace

FitMeta run_sampler(const Cohort& cohort, const SamplerConfig& config, const DrawSink& sink,
                    SamplerDiagnostics* diagnostics) {
  config.validate();
  cohort.validate();
  const int K = cohort.schema.K;
  const int n_subjects = static_cast<int>(cohort.subjects.size());

  // --- resolve schema: standardization and waiting-time cutpoints ---
  Cohort work = cohort;
  if (work.schema.standardize) fit_standardization(work);
  std::vector<double> all_waits;
  for (const auto& s : work.subjects)
    for (const auto& c : s.courses) all_waits.push_back(c.waiting_time);
  if (work.schema.w_cutpoints.empty() && K > 1) {
    std::vector<double> cuts = {quantile(all_waits, 0.25), quantile(all_waits, 0.50),
                                quantile(all_waits, 0.75)};
    for (std::size_t i = 1; i < cuts.size(); ++i)
      if (cuts[i] <= cuts[i - 1]) cuts[i] = cuts[i - 1] + 1e-9 * (1.0 + std::abs(cuts[i - 1]));
    work.schema.w_cutpoints = cuts;
  }
  const CovariateSchema& schema = work.schema;
  const double c_var = config.beta_prior_var;
  const double c_sd = std::sqrt(c_var);

  // --- per-course risk sets and designs ---
  std::vector<CoursePrep> prep(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) {
    prep[k - 1].p = model_design_dim(schema, k) + 1;
    prep[k - 1].q = k >= 2 ? confounder_design_dim(schema, k) : 0;
  }
  for (const auto& s : work.subjects) {
    for (int k = 1; k <= s.kappa(); ++k) {
      auto& cp = prep[k - 1];
      const History h = history(s, k);
      const auto& rec = s.courses[k - 1];
      auto x = encode_hazard_design(h, k, rec.treatment, schema);
      cp.p = static_cast<int>(x.size());
      cp.X.insert(cp.X.end(), x.begin(), x.end());
      cp.w.push_back(rec.waiting_time);
      cp.dy.push_back(rec.indicator == kNextTreatment ? 1 : 0);
      cp.dt.push_back(rec.indicator == kDeath ? 1 : 0);
      if (k >= 2) {
        auto z = encode_confounder_design(h, k, schema);
        cp.q = static_cast<int>(z.size());
        cp.Z.insert(cp.Z.end(), z.begin(), z.end());
        std::vector<double> tv;
        for (int idx : schema.time_varying_indices()) tv.push_back(rec.covariates[idx]);
        cp.tv_values.push_back(std::move(tv));
      }
      ++cp.n;
    }
  }

  // --- partitions and priors ---
  int target_intervals = config.intervals;
  if (target_intervals <= 0) target_intervals = n_subjects >= 1000 ? 20 : 10;
  if (config.halve_partition) target_intervals = std::max(1, target_intervals / 2);
  const double global_mean_wait =
      std::accumulate(all_waits.begin(), all_waits.end(), 0.0) / all_waits.size();
  const double global_max_wait = *std::max_element(all_waits.begin(), all_waits.end());

  FitMeta meta;
  meta.schema = schema;
  meta.config = config;
  meta.n = n_subjects;
  meta.max_observed_death = work.max_observed_death();
  meta.partitions_y.resize(static_cast<std::size_t>(K));
  meta.partitions_t.resize(static_cast<std::size_t>(K));
  meta.star_y.assign(static_cast<std::size_t>(K), 0.0);
  meta.star_t.assign(static_cast<std::size_t>(K), 0.0);
  for (const auto& s : work.subjects) meta.baseline_rows.push_back(s.courses[0].covariates);

  auto make_partition = [&](const CoursePrep& cp, const std::vector<int>& events) {
    if (cp.n == 0) return TimePartition{{0.0, global_max_wait}};
    std::vector<double> source;
    if (!config.shared_knots) {
      for (int i = 0; i < cp.n; ++i)
        if (events[i]) source.push_back(cp.w[i]);
    }
    if (source.size() < 3) source = cp.w;
    auto part = quantile_partition(source, target_intervals);
    // the partition must reach the largest observed waiting time at this course
    const double wmax = *std::max_element(cp.w.begin(), cp.w.end());
    if (part.knots.back() < wmax) part.knots.back() = wmax;
    return part;
  };
  auto star_rate_for = [&](const CoursePrep& cp) {
    if (cp.n == 0) return 1.0 / global_mean_wait;
    const double mean = std::accumulate(cp.w.begin(), cp.w.end(), 0.0) / cp.n;
    return mean > 0 ? 1.0 / mean : 1.0;
  };

  RngStream rng = RngStream::derive(config.seed, {0x73616d70ULL});

  // --- blocks ---
  std::vector<HazardBlock> hblocks;
  std::vector<ConfounderBlock> cblocks;
  for (int k = 1; k <= K; ++k) {
    auto& cp = prep[k - 1];
    const double star = star_rate_for(cp);
    for (int cause = 0; cause < (k < K ? 2 : 1); ++cause) {
      // cause 0 = death, cause 1 = next treatment
      const bool is_death = cause == 0;
      HazardBlock b;
      b.label = (is_death ? "T" : "Y") + std::string(".k") + std::to_string(k);
      b.course = k;
      b.family = config.baseline;
      b.data = &cp;
      b.d = is_death ? &cp.dt : &cp.dy;
      b.tail = config.tail;
      b.prior = GammaProcessPrior{config.alpha, star};
      TimePartition part = make_partition(cp, is_death ? cp.dt : cp.dy);
      b.ex = risk_set_exposures(cp.w, cp.dy, cp.dt, part, config.tail);
      b.event_counts = is_death ? b.ex.events_t : b.ex.events_y;
      b.rates.assign(static_cast<std::size_t>(part.intervals()), star);
      b.wb = {0.0, std::log(1.0 / star)};
      b.wb_scale_prior_rate = 0.5 * star;
      b.beta.assign(static_cast<std::size_t>(cp.p), 0.0);
      b.prop_beta = AdaptiveProposal("beta." + b.label, cp.p, config.initial_step);
      b.prop_wb = AdaptiveProposal("wb." + b.label, 2, config.initial_step);
      b.risk_weight.assign(static_cast<std::size_t>(cp.n), 1.0);
      b.cum0.assign(static_cast<std::size_t>(cp.n), 0.0);
      if (is_death) {
        meta.partitions_t[k - 1] = part;
        meta.star_t[k - 1] = star;
      } else {
        meta.partitions_y[k - 1] = part;
        meta.star_y[k - 1] = star;
      }
      hblocks.push_back(std::move(b));
    }
    if (k >= 2) {
      const auto tv_idx = schema.time_varying_indices();
      for (std::size_t pi = 0; pi < tv_idx.size(); ++pi) {
        const auto& spec = schema.covariates[tv_idx[pi]];
        ConfounderBlock b;
        b.label = spec.name + ".k" + std::to_string(k);
        b.course = k;
        b.type = spec.type;
        b.data = &cp;
        for (int i = 0; i < cp.n; ++i) b.values.push_back(cp.tv_values[i][pi]);
        b.eta.assign(static_cast<std::size_t>(cp.q), 0.0);
        b.prop_eta = AdaptiveProposal("eta." + b.label, cp.q, config.initial_step);
        b.has_scale = spec.type != CovariateType::binary;
        if (spec.type == CovariateType::proportion) {
          b.log_scale = std::log(10.0);
        } else if (spec.type == CovariateType::continuous) {
          double m0 = 0, s0 = 1;
          if (cp.n > 1) {
            m0 = std::accumulate(b.values.begin(), b.values.end(), 0.0) / cp.n;
            double ss = 0;
            for (double v : b.values) ss += (v - m0) * (v - m0);
            s0 = std::sqrt(std::max(ss / (cp.n - 1), 1e-6));
          }
          b.log_scale = std::log(s0);
        }
        b.prop_scale = AdaptiveProposal("scale." + b.label, 1, config.initial_step);
        cblocks.push_back(std::move(b));
      }
    }
  }

  // --- conditional log-posteriors ---
  auto beta_logpost = [&](const HazardBlock& b, std::span<const double> beta) {
    double lp = 0.0;
    for (int i = 0; i < b.data->n; ++i) {
      const auto xi = row(b.data->X, i, b.data->p);
      const double xb = dot(beta, xi);
      if ((*b.d)[i]) lp += xb;
      lp -= b.cum0[i] * std::exp(xb);
    }
    for (double bi : beta) lp -= bi * bi / (2.0 * c_var);
    return lp;
  };
  auto weibull_logpost = [&](const HazardBlock& b, std::span<const double> wb) {
    const double a = std::exp(wb[0]);
    const double s = std::exp(wb[1]);
    if (!std::isfinite(a) || !std::isfinite(s) || a <= 0 || s <= 0 || a > 50.0)
      return -std::numeric_limits<double>::infinity();
    double lp = 0.0;
    const double log_a = wb[0], log_s = wb[1];
    for (int i = 0; i < b.data->n; ++i) {
      const double wi = b.data->w[i];
      if ((*b.d)[i]) lp += log_a - a * log_s + (a - 1.0) * std::log(wi);
      lp -= std::pow(wi / s, a) * b.risk_weight[i];
    }
    // weak Gamma priors on shape and scale, plus the log-scale Jacobian
    lp += 2.0 * log_a - 0.4 * a;
    lp += 1.5 * log_s - b.wb_scale_prior_rate * s;
    return lp;
  };

  auto refresh_risk_weights = [&](HazardBlock& b) {
    for (int i = 0; i < b.data->n; ++i)
      b.risk_weight[i] = std::exp(dot(b.beta, row(b.data->X, i, b.data->p)));
  };
  auto refresh_cum0 = [&](HazardBlock& b) {
    if (b.family == BaselineFamily::gamma_process) {
      const int J = b.ex.partition.intervals();
      std::vector<double> cum_at_knot(static_cast<std::size_t>(J) + 1, 0.0);
      for (int j = 0; j < J; ++j)
        cum_at_knot[j + 1] = cum_at_knot[j] + b.rates[j] * b.ex.partition.width(j);
      for (int i = 0; i < b.data->n; ++i) {
        const int li = b.ex.last_interval[i];
        b.cum0[i] = cum_at_knot[li] + b.rates[li] * b.ex.last_exposure[i];
      }
    } else {
      const double a = std::exp(b.wb[0]), s = std::exp(b.wb[1]);
      for (int i = 0; i < b.data->n; ++i) b.cum0[i] = std::pow(b.data->w[i] / s, a);
    }
  };

  auto eta_logpost = [&](const ConfounderBlock& b, std::span<const double> eta) {
    ConfounderSubmodel sub;
    std::vector<double> e(eta.begin(), eta.end());
    switch (b.type) {
      case CovariateType::proportion: sub = BetaRegression{e, std::exp(b.log_scale)}; break;
      case CovariateType::binary: sub = LogisticRegression{e}; break;
      default: sub = GaussianRegression{e, std::exp(b.log_scale)}; break;
    }
    double lp = confounder_loglik_sum(b, sub);
    for (double v : eta) lp -= v * v / (2.0 * c_var);
    return lp;
  };
  auto scale_logpost = [&](const ConfounderBlock& b, double log_scale) {
    const double v = std::exp(log_scale);
    if (!std::isfinite(v) || v <= 0) return -std::numeric_limits<double>::infinity();
    ConfounderSubmodel sub;
    double prior;
    if (b.type == CovariateType::proportion) {
      sub = BetaRegression{b.eta, v};
      prior = 2.0 * log_scale - 0.1 * v;  // Gamma(2, 0.1) + Jacobian
    } else {
      sub = GaussianRegression{b.eta, v};
      prior = log_scale - std::log(1.0 + v * v);  // half-Cauchy(0,1) + Jacobian
    }
    return confounder_loglik_sum(b, sub) + prior;
  };

  // --- sweep ---
  auto sweep_course = [&](int k) {
    for (auto& b : hblocks) {
      if (b.course != k) continue;
      refresh_risk_weights(b);
      if (b.family == BaselineFamily::gamma_process) {
        b.rates = gibbs_update_rates(b.ex, b.event_counts, b.risk_weight, b.prior, rng);
      } else {
        mh_update(b.wb, [&](std::span<const double> v) { return weibull_logpost(b, v); },
                  b.prop_wb, rng);
      }
      refresh_cum0(b);
      mh_update(b.beta, [&](std::span<const double> v) { return beta_logpost(b, v); },
                b.prop_beta, rng);
    }
    for (auto& b : cblocks) {
      if (b.course != k) continue;
      mh_update(b.eta, [&](std::span<const double> v) { return eta_logpost(b, v); }, b.prop_eta,
                rng);
      if (b.has_scale) {
        std::vector<double> ls = {b.log_scale};
        mh_update(ls, [&](std::span<const double> v) { return scale_logpost(b, v[0]); },
                  b.prop_scale, rng);
        b.log_scale = ls[0];
      }
    }
  };

  auto assemble_draw = [&](int m) {
    ParameterDraw d;
    d.m = m;
    d.courses.resize(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) {
      auto& cd = d.courses[k - 1];
      cd.confounders.course = k;
      for (const auto& b : hblocks) {
        if (b.course != k) continue;
        if (b.d == &prep[k - 1].dt)
          cd.death = b.to_model(c_sd);
        else
          cd.next = b.to_model(c_sd);
      }
      for (const auto& b : cblocks)
        if (b.course == k) cd.confounders.submodels.push_back(b.to_submodel());
    }
    d.f1_weights = rng.dirichlet_uniform(static_cast<std::size_t>(n_subjects));
    return d;
  };

  for (int m = 1; m <= config.iterations; ++m) {
    for (int k = 1; k <= K; ++k) sweep_course(k);
    if (m == config.burnin) {
      for (auto& b : hblocks) {
        b.prop_beta.freeze(config.adapt_jitter);
        b.prop_wb.freeze(config.adapt_jitter);
      }
      for (auto& b : cblocks) {
        b.prop_eta.freeze(config.adapt_jitter);
        b.prop_scale.freeze(config.adapt_jitter);
      }
    }
    if (m > config.burnin && (m - config.burnin) % config.thin == 0) sink(assemble_draw(m));
  }

  if (diagnostics) {
    diagnostics->acceptance_rates.clear();
    for (const auto& b : hblocks) {
      diagnostics->acceptance_rates.push_back(
          {b.prop_beta.label(), b.prop_beta.post_freeze_acceptance()});
      if (b.family == BaselineFamily::weibull)
        diagnostics->acceptance_rates.push_back(
            {b.prop_wb.label(), b.prop_wb.post_freeze_acceptance()});
    }
    for (const auto& b : cblocks) {
      diagnostics->acceptance_rates.push_back(
          {b.prop_eta.label(), b.prop_eta.post_freeze_acceptance()});
      if (b.has_scale)
        diagnostics->acceptance_rates.push_back(
            {b.prop_scale.label(), b.prop_scale.post_freeze_acceptance()});
    }
  }
  return meta;
}

// ---------------- serialization ----------------

namespace {

json partition_json(const TimePartition& p) { return json(p.knots); }

json hazard_json(const HazardModel& m) {
  json j;
  if (std::holds_alternative<PiecewiseHazardModel>(m)) {
    const auto& pw = std::get<PiecewiseHazardModel>(m);
    j["r"] = pw.rates;
    j["b"] = pw.beta;
  } else {
    const auto& wb = std::get<WeibullHazardModel>(m);
    j["a"] = wb.shape;
    j["s"] = wb.scale;
    j["b"] = wb.beta;
  }
  return j;
}

json submodel_json(const ConfounderSubmodel& s) {
  json j;
  if (std::holds_alternative<BetaRegression>(s)) {
    const auto& b = std::get<BetaRegression>(s);
    j["k"] = "beta";
    j["e"] = b.eta;
    j["p"] = b.phi;
  } else if (std::holds_alternative<LogisticRegression>(s)) {
    j["k"] = "logit";
    j["e"] = std::get<LogisticRegression>(s).eta;
  } else {
    const auto& g = std::get<GaussianRegression>(s);
    j["k"] = "gauss";
    j["e"] = g.eta;
    j["s"] = g.sigma;
  }
  return j;
}

ConfounderSubmodel submodel_from_json(const json& j) {
  const std::string kind = j.at("k");
  if (kind == "beta")
    return BetaRegression{j.at("e").get<std::vector<double>>(), j.at("p").get<double>()};
  if (kind == "logit") return LogisticRegression{j.at("e").get<std::vector<double>>()};
  if (kind == "gauss")
    return GaussianRegression{j.at("e").get<std::vector<double>>(), j.at("s").get<double>()};
  throw ParseError("unknown confounder submodel kind " + kind);
}

HazardModel hazard_from_json(const json& j, const FitMeta& meta, int k, bool is_death) {
  const double c_sd = std::sqrt(meta.config.beta_prior_var);
  if (j.contains("r")) {
    PiecewiseHazardModel m;
    m.partition = is_death ? meta.partitions_t[k - 1] : meta.partitions_y[k - 1];
    m.rates = j.at("r").get<std::vector<double>>();
    m.beta = j.at("b").get<std::vector<double>>();
    m.tail = meta.config.tail;
    m.prior = GammaProcessPrior{meta.config.alpha,
                                is_death ? meta.star_t[k - 1] : meta.star_y[k - 1]};
    m.beta_prior_sd = c_sd;
    return m;
  }
  WeibullHazardModel m;
  m.shape = j.at("a").get<double>();
  m.scale = j.at("s").get<double>();
  m.beta = j.at("b").get<std::vector<double>>();
  m.beta_prior_sd = c_sd;
  return m;
}

}  // namespace

std::string draws_meta_json(const FitMeta& meta) {
  json j;
  j["type"] = "meta";
  j["schema"] = meta.schema.to_text();
  j["n"] = meta.n;
  j["K"] = meta.schema.K;
  j["baseline"] =
      meta.config.baseline == BaselineFamily::gamma_process ? "gp" : "weibull";
  j["alpha"] = meta.config.alpha;
  j["c"] = meta.config.beta_prior_var;
  j["tail"] = meta.config.tail == TailPolicy::extend_last ? "extend" : "truncate";
  j["M"] = meta.config.iterations;
  j["burnin"] = meta.config.burnin;
  j["thin"] = meta.config.thin;
  j["seed"] = meta.config.seed;
  json py = json::array(), pt = json::array();
  for (const auto& p : meta.partitions_y) py.push_back(partition_json(p));
  for (const auto& p : meta.partitions_t) pt.push_back(partition_json(p));
  j["partitions_y"] = py;
  j["partitions_t"] = pt;
  j["star_y"] = meta.star_y;
  j["star_t"] = meta.star_t;
  j["baseline_rows"] = meta.baseline_rows;
  j["max_observed_death"] = meta.max_observed_death;
  return j.dump();
}

std::string draw_json(const ParameterDraw& draw) {
  json j;
  j["m"] = draw.m;
  json courses = json::array();
  for (const auto& c : draw.courses) {
    json jc;
    jc["t"] = hazard_json(c.death);
    if (c.next)
      jc["y"] = hazard_json(*c.next);
    else
      jc["y"] = nullptr;
    json cf = json::array();
    for (const auto& s : c.confounders.submodels) cf.push_back(submodel_json(s));
    jc["cf"] = cf;
    courses.push_back(std::move(jc));
  }
  j["c"] = std::move(courses);
  j["f1"] = draw.f1_weights;
  return j.dump();
}

DrawSet read_draws_ndjson(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty draws file " + path.string());
  json meta_j = json::parse(line);
  bool meta_inline = meta_j.value("type", "") == "meta";
  if (!meta_inline) {
    // metadata lives in the sidecar; every line of the draws file is a draw
    std::filesystem::path side = path;
    side += ".meta.json";
    meta_j = json::parse(read_file(side));
    in.str(read_file(path));
    in.clear();
    in.seekg(0);
  }

  DrawSet set;
  FitMeta& meta = set.meta;
  meta.schema = CovariateSchema::from_keyvalues(
      KeyValueFile::from_string(meta_j.at("schema").get<std::string>()));
  meta.n = meta_j.at("n").get<int>();
  meta.config.baseline = meta_j.at("baseline").get<std::string>() == "gp"
                             ? BaselineFamily::gamma_process
                             : BaselineFamily::weibull;
  meta.config.alpha = meta_j.at("alpha").get<double>();
  meta.config.beta_prior_var = meta_j.at("c").get<double>();
  meta.config.tail = meta_j.at("tail").get<std::string>() == "extend" ? TailPolicy::extend_last
                                                                      : TailPolicy::truncate;
  meta.config.iterations = meta_j.at("M").get<int>();
  meta.config.burnin = meta_j.at("burnin").get<int>();
  meta.config.thin = meta_j.at("thin").get<int>();
  meta.config.seed = meta_j.at("seed").get<std::uint64_t>();
  for (const auto& p : meta_j.at("partitions_y"))
    meta.partitions_y.push_back(TimePartition{p.get<std::vector<double>>()});
  for (const auto& p : meta_j.at("partitions_t"))
    meta.partitions_t.push_back(TimePartition{p.get<std::vector<double>>()});
  meta.star_y = meta_j.at("star_y").get<std::vector<double>>();
  meta.star_t = meta_j.at("star_t").get<std::vector<double>>();
  meta.baseline_rows = meta_j.at("baseline_rows").get<std::vector<std::vector<double>>>();
  meta.max_observed_death = meta_j.at("max_observed_death").get<double>();

  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line);
    ParameterDraw d;
    d.m = j.at("m").get<int>();
    int k = 1;
    for (const auto& jc : j.at("c")) {
      CourseDraw cd;
      cd.death = hazard_from_json(jc.at("t"), meta, k, true);
      if (!jc.at("y").is_null()) cd.next = hazard_from_json(jc.at("y"), meta, k, false);
      cd.confounders.course = k;
      for (const auto& js : jc.at("cf"))
        cd.confounders.submodels.push_back(submodel_from_json(js));
      d.courses.push_back(std::move(cd));
      ++k;
    }
    d.f1_weights = j.at("f1").get<std::vector<double>>();
    set.draws.push_back(std::move(d));
  }
  return set;
}

void write_draws_ndjson(const std::filesystem::path& path, const DrawSet& set) {
  std::filesystem::path side = path;
  side += ".meta.json";
  write_file_atomic(side, draws_meta_json(set.meta) + "\n");
  std::ostringstream out;
  for (const auto& d : set.draws) out << draw_json(d) << "\n";
  write_file_atomic(path, out.str());
}

}  // namespace dtr
