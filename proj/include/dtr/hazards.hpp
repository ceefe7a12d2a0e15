#pragma once

#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "dtr/rng.hpp"

namespace dtr {

// Waiting times past the end of a truncated baseline get this sentinel;
// callers treat it as surviving past any administrative horizon.
inline constexpr double kBeyondHorizon = std::numeric_limits<double>::infinity();

struct TimePartition {
  std::vector<double> knots;  // u_1 = 0 < u_2 < ... < u_J

  int intervals() const { return static_cast<int>(knots.size()) - 1; }
  double width(int j) const { return knots[j + 1] - knots[j]; }
  // index of the interval containing w, clamped to the last interval for w
  // at or beyond the final knot
  int interval_of(double w) const;
  void validate() const;
};

// GP(alpha * Lambda_star) with linear centering Lambda_star(w) = star_rate * w.
// Induces independent Gamma increments on a piecewise-constant hazard:
// (u_{j+1}-u_j) * rate_j ~ Gamma(alpha*star_rate*(u_{j+1}-u_j), alpha).
struct GammaProcessPrior {
  double alpha = 0.01;
  double star_rate = 1.0;
};

enum class TailPolicy { extend_last, truncate };

struct PiecewiseHazardModel {
  TimePartition partition;
  std::vector<double> rates;  // one per interval, all > 0
  std::vector<double> beta;   // log hazard ratios on the design vector
  TailPolicy tail = TailPolicy::extend_last;
  GammaProcessPrior prior;
  double beta_prior_sd = 1.0;

  double baseline_hazard(double w) const;
  double baseline_cumulative(double w) const;
  // smallest w with baseline_cumulative(w) = target; kBeyondHorizon when the
  // truncated total is exceeded
  double invert_baseline_cumulative(double target) const;
};

// Weibull(a, s) baseline: rate (a/s^a) w^(a-1). Used by the parametric
// comparator and the synthetic-data generator.
struct WeibullHazardModel {
  double shape = 1.0;
  double scale = 1.0;
  std::vector<double> beta;
  double beta_prior_sd = 1.0;

  double baseline_hazard(double w) const;
  double baseline_cumulative(double w) const;
  double invert_baseline_cumulative(double target) const;
};

using HazardModel = std::variant<PiecewiseHazardModel, WeibullHazardModel>;

double dot(std::span<const double> a, std::span<const double> b);

double baseline_hazard(const HazardModel& m, double w);
double baseline_cumulative(const HazardModel& m, double w);
double invert_baseline_cumulative(const HazardModel& m, double target);
std::span<const double> model_beta(const HazardModel& m);

// lambda_0(w) * exp(x'beta)
double hazard_at(const HazardModel& m, double w, std::span<const double> x);
// integral of hazard_at over [0, w]
double cumulative_hazard(const HazardModel& m, double w, std::span<const double> x);
// exp(-cumulative)
double survival(const HazardModel& m, double w, std::span<const double> x);
// probability of neither competing event by w: exp(-Lambda_Y - Lambda_T)
double survival_both(const HazardModel& next, const HazardModel& death, double w,
                     std::span<const double> x);

// inverse-CDF draw: solves cumulative_hazard(W) = -log(u); one uniform in,
// kBeyondHorizon out when a truncated baseline is exhausted
double sample_waiting_time(const HazardModel& m, std::span<const double> x, double u);

std::vector<double> sample_gp_prior(const GammaProcessPrior& prior, const TimePartition& partition,
                                    RngStream& rng);

// knots at empirical quantiles of the observed waiting times, first knot 0,
// last knot max(w); degenerate data collapse to fewer intervals
TimePartition quantile_partition(std::span<const double> waits, int target_intervals);

}  // namespace dtr
