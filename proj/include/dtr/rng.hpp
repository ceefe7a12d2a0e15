#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace dtr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic stream key from a root seed and a path of stream ids.
// Used everywhere a worker or substream needs its own generator so that
// results do not depend on thread scheduling.
inline std::uint64_t derive_key(std::uint64_t seed, std::span<const std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed ^ 0x5dee3c7f1a2b4c6dULL);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p));
  return h;
}

inline std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return derive_key(seed, std::span<const std::uint64_t>(path.begin(), path.size()));
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : eng_(key) {}

  static RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    return RngStream(derive_key(seed, std::span<const std::uint64_t>(path.begin(), path.size())));
  }

  // open interval (0,1); safe to feed to log()
  double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }

  double normal(double mean = 0.0, double sd = 1.0) {
    std::normal_distribution<double> d(mean, sd);
    return d(eng_);
  }

  // shape/rate parameterization
  double gamma(double shape, double rate) {
    std::gamma_distribution<double> d(shape, 1.0 / rate);
    return d(eng_);
  }

  double beta(double a, double b) {
    double x = gamma(a, 1.0);
    double y = gamma(b, 1.0);
    double r = x / (x + y);
    if (r <= 0.0) r = 1e-12;
    if (r >= 1.0) r = 1.0 - 1e-12;
    return r;
  }

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  // Dirichlet(1,...,1): normalized iid Exp(1)
  std::vector<double> dirichlet_uniform(std::size_t n) {
    std::vector<double> w(n);
    double sum = 0.0;
    for (auto& x : w) {
      x = -std::log(uniform());
      sum += x;
    }
    for (auto& x : w) x /= sum;
    return w;
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dtr
