#include "dtr/confounders.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "dtr/hazards.hpp"  // dot()
#include "dtr/io.hpp"

namespace dtr {

namespace {

constexpr double kPropEps = 1e-6;

double clamp_proportion(double l) {
  static std::atomic<bool> warned{false};
  if (l <= 0.0 || l >= 1.0) {
    if (!warned.exchange(true))
      std::cerr << "warning: proportion at support boundary clamped to ["
                << kPropEps << ", 1-" << kPropEps << "]\n";
    return l <= 0.0 ? kPropEps : 1.0 - kPropEps;
  }
  return l;
}

// log p and log(1-p) for p = logistic(t), stable for large |t|
double log_logistic(double t) { return t >= 0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t)); }

}  // namespace

double simulate_covariate(const ConfounderSubmodel& m, std::span<const double> z, RngStream& rng) {
  if (std::holds_alternative<BetaRegression>(m)) {
    const auto& b = std::get<BetaRegression>(m);
    const double mu = std::clamp(logistic(dot(b.eta, z)), kPropEps, 1.0 - kPropEps);
    return rng.beta(mu * b.phi, (1.0 - mu) * b.phi);
  }
  if (std::holds_alternative<LogisticRegression>(m)) {
    const auto& l = std::get<LogisticRegression>(m);
    return static_cast<double>(rng.bernoulli(logistic(dot(l.eta, z))));
  }
  const auto& g = std::get<GaussianRegression>(m);
  return rng.normal(dot(g.eta, z), g.sigma);
}

std::vector<double> simulate_confounders(const ConfounderModel& m, std::span<const double> z,
                                         RngStream& rng) {
  std::vector<double> out;
  out.reserve(m.submodels.size());
  for (const auto& sub : m.submodels) out.push_back(simulate_covariate(sub, z, rng));
  return out;
}

double loglik_covariate(const ConfounderSubmodel& m, std::span<const double> z, double value) {
  if (std::holds_alternative<BetaRegression>(m)) {
    const auto& b = std::get<BetaRegression>(m);
    if (!(b.phi > 0.0)) throw std::invalid_argument("beta regression needs phi > 0");
    const double mu = std::clamp(logistic(dot(b.eta, z)), kPropEps, 1.0 - kPropEps);
    const double l = clamp_proportion(value);
    const double a = mu * b.phi;
    const double c = (1.0 - mu) * b.phi;
    return (a - 1.0) * std::log(l) + (c - 1.0) * std::log1p(-l) + std::lgamma(a + c) -
           std::lgamma(a) - std::lgamma(c);
  }
  if (std::holds_alternative<LogisticRegression>(m)) {
    const auto& lr = std::get<LogisticRegression>(m);
    const double t = dot(lr.eta, z);
    return value != 0.0 ? log_logistic(t) : log_logistic(-t);
  }
  const auto& g = std::get<GaussianRegression>(m);
  if (!(g.sigma > 0.0)) throw std::invalid_argument("gaussian regression needs sigma > 0");
  const double r = (value - dot(g.eta, z)) / g.sigma;
  return -0.5 * std::log(2.0 * M_PI) - std::log(g.sigma) - 0.5 * r * r;
}

double loglik_confounders(const ConfounderModel& m, std::span<const double> z,
                          std::span<const double> values) {
  if (values.size() != m.submodels.size())
    throw std::invalid_argument("confounder value count does not match submodels");
  double ll = 0.0;
  for (std::size_t p = 0; p < m.submodels.size(); ++p)
    ll += loglik_covariate(m.submodels[p], z, values[p]);
  return ll;
}

std::vector<double> bayesian_bootstrap_draw(std::size_t n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("bootstrap needs n >= 1");
  return rng.dirichlet_uniform(n);
}

}  // namespace dtr
