#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtr/confounders.hpp"
#include "dtr/data.hpp"
#include "dtr/hazards.hpp"
#include "dtr/rng.hpp"

namespace dtr {

enum class BaselineFamily { gamma_process, weibull };

struct SamplerConfig {
  int iterations = 4000;  // M
  int burnin = 2000;      // M*, proposal adaptation happens here
  int thin = 1;
  double initial_step = 0.1;     // burn-in diagonal proposal sd
  double adapt_jitter = 1e-6;    // ridge added to the adapted covariance
  double alpha = 0.01;           // GP concentration
  double beta_prior_var = 1.0;   // c in N(0, cI) for beta and eta
  BaselineFamily baseline = BaselineFamily::gamma_process;
  int intervals = 0;             // 0 = auto: 20 if n >= 1000 else 10
  bool halve_partition = false;  // sensitivity switch
  TailPolicy tail = TailPolicy::extend_last;
  bool shared_knots = true;      // same partition for both causes of a course
  std::uint64_t seed = 1;

  void validate() const;
  static SamplerConfig from_keyvalues(const KeyValueFile& kv);
};

// Interval exposures and event placement for one course's risk set.
struct ExposureSet {
  TimePartition partition;
  TailPolicy tail = TailPolicy::extend_last;
  std::vector<double> w;
  std::vector<int> last_interval;   // interval containing w (clamped)
  std::vector<double> last_exposure;
  std::vector<int> events_y;        // per-interval counts, next-treatment
  std::vector<int> events_t;        // per-interval counts, death

  int subjects() const { return static_cast<int>(w.size()); }
  double exposure(int i, int j) const;
  double total_exposure(int i) const;
};

ExposureSet risk_set_exposures(std::span<const double> w, std::span<const int> delta_y,
                               std::span<const int> delta_t, const TimePartition& partition,
                               TailPolicy tail);

// Conjugate update of the piecewise rates: with theta_j = du_j * rate_j,
// theta_j ~ Gamma(alpha*star*du_j + D_j, alpha + R_j/du_j), where D_j are the
// cause's event counts and R_j = sum_i e_ij * risk_weight_i.
std::vector<double> gibbs_update_rates(const ExposureSet& ex, std::span<const int> event_counts,
                                       std::span<const double> risk_weights,
                                       const GammaProcessPrior& prior, RngStream& rng);

// s_d * cov(history) + jitter * I, row-major; history rows are draws
std::vector<double> adapt_covariance(const std::vector<std::vector<double>>& history, double s_d,
                                     double jitter);

// Random-walk Metropolis proposal: diagonal with a step size tuned during
// burn-in, then frozen at the Haario covariance of the recorded burn-in
// draws. No adaptation after freeze().
class AdaptiveProposal {
 public:
  AdaptiveProposal() = default;
  AdaptiveProposal(std::string label, int dim, double init_sd);

  void propose(std::span<const double> current, std::span<double> out, RngStream& rng);
  void record(std::span<const double> draw, double acc_prob);
  void freeze(double jitter);
  bool frozen() const { return frozen_; }
  double post_freeze_acceptance() const;
  const std::string& label() const { return label_; }

 private:
  std::string label_;
  int dim_ = 0;
  double init_sd_ = 0.1;
  double log_step_ = 0.0;
  long tuning_steps_ = 0;
  std::vector<std::vector<double>> history_;
  std::vector<double> chol_;  // row-major lower triangular, frozen proposal
  bool frozen_ = false;
  double acc_sum_ = 0.0;
  long acc_n_ = 0;
};

// One generic random-walk Metropolis step; returns the acceptance
// probability and mutates state on acceptance. Non-finite proposals are
// rejected.
double mh_update(std::vector<double>& state,
                 const std::function<double(std::span<const double>)>& log_post,
                 AdaptiveProposal& proposal, RngStream& rng);

// sum_i d_i log lambda(w_i|x_i) - Lambda(w_i|x_i); X is n x p row-major
double hazard_loglik(const HazardModel& m, std::span<const double> X, int p,
                     std::span<const double> w, std::span<const int> d);

struct CourseDraw {
  HazardModel death;
  std::optional<HazardModel> next;  // absent at course K
  ConfounderModel confounders;      // empty submodels at course 1
};

struct ParameterDraw {
  int m = 0;
  std::vector<CourseDraw> courses;
  std::vector<double> f1_weights;  // Bayesian-bootstrap weights over baseline rows
};

struct FitMeta {
  CovariateSchema schema;  // resolved cutpoints and standardization
  SamplerConfig config;
  int n = 0;
  std::vector<TimePartition> partitions_y;  // index k-1; empty knots at K
  std::vector<TimePartition> partitions_t;
  std::vector<double> star_y, star_t;
  std::vector<std::vector<double>> baseline_rows;  // course-1 covariate rows
  double max_observed_death = 0.0;
};

struct BlockRate {
  std::string label;
  double acceptance = 0.0;
};

struct SamplerDiagnostics {
  std::vector<BlockRate> acceptance_rates;  // post-burn-in MH rates
};

using DrawSink = std::function<void(const ParameterDraw&)>;

// Blocked Metropolis-in-Gibbs sweep over courses 1..K; emits post-burn-in
// draws (thinned) to the sink. Reproducible for a fixed config.seed.
FitMeta run_sampler(const Cohort& cohort, const SamplerConfig& config, const DrawSink& sink,
                    SamplerDiagnostics* diagnostics = nullptr);

struct DrawSet {
  FitMeta meta;
  std::vector<ParameterDraw> draws;
};

std::string draws_meta_json(const FitMeta& meta);
std::string draw_json(const ParameterDraw& draw);
DrawSet read_draws_ndjson(const std::filesystem::path& path);
void write_draws_ndjson(const std::filesystem::path& path, const DrawSet& set);

}  // namespace dtr
