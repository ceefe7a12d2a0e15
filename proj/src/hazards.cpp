#include "dtr/hazards.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "dtr/io.hpp"

namespace dtr {

void TimePartition::validate() const {
  if (knots.size() < 2) throw ValidationError("partition needs at least 2 knots");
  if (knots.front() != 0.0) throw ValidationError("partition must start at 0");
  for (std::size_t j = 1; j < knots.size(); ++j)
    if (!(knots[j] > knots[j - 1])) throw ValidationError("partition knots must be ascending");
}

int TimePartition::interval_of(double w) const {
  const int J = intervals();
  if (w >= knots.back()) return J - 1;
  int lo = 0, hi = J - 1;
  while (lo < hi) {
    int mid = (lo + hi + 1) / 2;
    if (knots[mid] <= w)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double PiecewiseHazardModel::baseline_hazard(double w) const {
  if (w < 0.0) return 0.0;
  if (w >= partition.knots.back() && tail == TailPolicy::truncate) return 0.0;
  return rates[partition.interval_of(w)];
}

double PiecewiseHazardModel::baseline_cumulative(double w) const {
  if (w <= 0.0) return 0.0;
  const int J = partition.intervals();
  double cum = 0.0;
  for (int j = 0; j < J; ++j) {
    const double a = partition.knots[j];
    const double b = partition.knots[j + 1];
    if (w <= b) return cum + rates[j] * (w - a);
    cum += rates[j] * (b - a);
  }
  // beyond the last knot
  if (tail == TailPolicy::extend_last) cum += rates[J - 1] * (w - partition.knots.back());
  return cum;
}

double PiecewiseHazardModel::invert_baseline_cumulative(double target) const {
  if (target <= 0.0) return 0.0;
  const int J = partition.intervals();
  double cum = 0.0;
  for (int j = 0; j < J; ++j) {
    const double seg = rates[j] * partition.width(j);
    if (target <= cum + seg) return partition.knots[j] + (target - cum) / rates[j];
    cum += seg;
  }
  if (tail == TailPolicy::truncate) return kBeyondHorizon;
  return partition.knots.back() + (target - cum) / rates[J - 1];
}

double WeibullHazardModel::baseline_hazard(double w) const {
  if (w < 0.0) return 0.0;
  if (w == 0.0 && shape < 1.0) w = 1e-300;  // avoid the pole
  return (shape / std::pow(scale, shape)) * std::pow(w, shape - 1.0);
}

double WeibullHazardModel::baseline_cumulative(double w) const {
  if (w <= 0.0) return 0.0;
  return std::pow(w / scale, shape);
}

double WeibullHazardModel::invert_baseline_cumulative(double target) const {
  if (target <= 0.0) return 0.0;
  return scale * std::pow(target, 1.0 / shape);
}

double baseline_hazard(const HazardModel& m, double w) {
  return std::visit([&](const auto& mm) { return mm.baseline_hazard(w); }, m);
}

double baseline_cumulative(const HazardModel& m, double w) {
  return std::visit([&](const auto& mm) { return mm.baseline_cumulative(w); }, m);
}

double invert_baseline_cumulative(const HazardModel& m, double target) {
  return std::visit([&](const auto& mm) { return mm.invert_baseline_cumulative(target); }, m);
}

std::span<const double> model_beta(const HazardModel& m) {
  return std::visit([](const auto& mm) { return std::span<const double>(mm.beta); }, m);
}

double hazard_at(const HazardModel& m, double w, std::span<const double> x) {
  return baseline_hazard(m, w) * std::exp(dot(model_beta(m), x));
}

double cumulative_hazard(const HazardModel& m, double w, std::span<const double> x) {
  return baseline_cumulative(m, w) * std::exp(dot(model_beta(m), x));
}

double survival(const HazardModel& m, double w, std::span<const double> x) {
  return std::exp(-cumulative_hazard(m, w, x));
}

double survival_both(const HazardModel& next, const HazardModel& death, double w,
                     std::span<const double> x) {
  return std::exp(-cumulative_hazard(next, w, x) - cumulative_hazard(death, w, x));
}

double sample_waiting_time(const HazardModel& m, std::span<const double> x, double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("sample_waiting_time: u not in (0,1)");
  const double target = -std::log(u) / std::exp(dot(model_beta(m), x));
  return invert_baseline_cumulative(m, target);
}

std::vector<double> sample_gp_prior(const GammaProcessPrior& prior, const TimePartition& partition,
                                    RngStream& rng) {
  partition.validate();
  if (!(prior.alpha > 0.0) || !(prior.star_rate > 0.0))
    throw ValidationError("gamma process prior needs alpha > 0 and star_rate > 0");
  std::vector<double> rates(partition.intervals());
  for (int j = 0; j < partition.intervals(); ++j) {
    const double du = partition.width(j);
    const double theta = rng.gamma(prior.alpha * prior.star_rate * du, prior.alpha);
    rates[j] = std::max(theta / du, 1e-300);
  }
  return rates;
}

TimePartition quantile_partition(std::span<const double> waits, int target_intervals) {
  if (waits.empty()) throw ValidationError("cannot build partition from no waiting times");
  if (target_intervals < 1) target_intervals = 1;
  std::vector<double> sorted(waits.begin(), waits.end());
  std::sort(sorted.begin(), sorted.end());
  const double wmax = sorted.back();
  if (!(wmax > 0.0)) throw ValidationError("waiting times must be positive");

  std::set<double> ks;
  ks.insert(0.0);
  for (int j = 1; j < target_intervals; ++j) {
    const double p = static_cast<double>(j) / target_intervals;
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(h);
    const double q = sorted[lo] + (h - static_cast<double>(lo)) *
                                      (sorted[std::min(lo + 1, sorted.size() - 1)] - sorted[lo]);
    if (q > 0.0 && q < wmax) ks.insert(q);
  }
  ks.insert(wmax);
  TimePartition part{std::vector<double>(ks.begin(), ks.end())};
  part.validate();
  return part;
}

}  // namespace dtr
