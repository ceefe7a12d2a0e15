#pragma once

#include <span>
#include <variant>
#include <vector>

#include "dtr/rng.hpp"

namespace dtr {

// Beta(mu*phi, (1-mu)*phi) with logit(mu) = z'eta
struct BetaRegression {
  std::vector<double> eta;
  double phi = 1.0;
};

struct LogisticRegression {
  std::vector<double> eta;
};

// value ~ N(z'eta, sigma^2)
struct GaussianRegression {
  std::vector<double> eta;
  double sigma = 1.0;
};

using ConfounderSubmodel = std::variant<BetaRegression, LogisticRegression, GaussianRegression>;

// Sequential model f_k for the time-varying covariates at course k >= 2,
// one submodel per covariate, conditionally independent given the design.
struct ConfounderModel {
  int course = 2;
  std::vector<ConfounderSubmodel> submodels;  // schema time-varying order
};

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double simulate_covariate(const ConfounderSubmodel& m, std::span<const double> z, RngStream& rng);
std::vector<double> simulate_confounders(const ConfounderModel& m, std::span<const double> z,
                                         RngStream& rng);

double loglik_covariate(const ConfounderSubmodel& m, std::span<const double> z, double value);
double loglik_confounders(const ConfounderModel& m, std::span<const double> z,
                          std::span<const double> values);

// one draw from Dirichlet(1,...,1); the Bayesian-bootstrap posterior weights
std::vector<double> bayesian_bootstrap_draw(std::size_t n, RngStream& rng);

}  // namespace dtr
