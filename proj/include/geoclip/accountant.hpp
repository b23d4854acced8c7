#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace geoclip {

// One homogeneous block of releases: `steps` adaptive invocations of the
// Gaussian mechanism at sensitivity 1 and noise multiplier `sigma`, each on a
// Poisson subsample with inclusion rate `sample_rate` (add/remove adjacency).
struct PrivacySpec {
  double sigma = 1.0;
  double sample_rate = 1.0;
  std::int64_t steps = 0;
  double delta = 1e-5;

  void validate() const;
};

struct EpsilonCurve {
  std::vector<std::pair<std::int64_t, double>> points;  // (step, epsilon)
};

// Renyi divergence bound rho(alpha) for one subsampled Gaussian release.
// Integer orders use the exact binomial expansion, computed through
// log(A - 1) so relative precision survives both q -> 0 and large
// alpha^2 / sigma^2. Real orders use the two-sided series expansion.
// q = 1 short-circuits to the pure Gaussian value alpha / (2 sigma^2).
double rdp_subsampled_gaussian(double sigma, double q, double alpha);

// Fixed conversion grid {1.25, 1.50, ..., 64.00}. Extending it can only
// lower reported epsilon.
const std::vector<double>& rdp_order_grid();

// min over the order grid of steps * rho(alpha) + log(1/delta) / (alpha - 1).
// Zero steps report epsilon 0 by convention.
double epsilon_of(const PrivacySpec& spec);
double epsilon_of(const PrivacySpec& spec, const std::vector<double>& orders);

// Order-wise RDP addition across blocks before a single conversion. All
// blocks must share the same delta.
double compose_heterogeneous(const std::vector<PrivacySpec>& specs);

// Inverse of epsilon_of in sigma by bisection over [0.3, 100], stopping at
// |epsilon(sigma) - target| <= 1e-3 * target. Throws if the target is not
// attainable inside the bracket.
double sigma_for_target(double epsilon_target, double q, std::int64_t steps,
                        double delta);

// epsilon_of evaluated at each requested step count (ascending).
EpsilonCurve epsilon_curve(const PrivacySpec& spec,
                           const std::vector<std::int64_t>& eval_steps);

// CSV with one header row: step,epsilon
void write_epsilon_curve_csv(const EpsilonCurve& curve,
                             const std::string& path);

}  // namespace geoclip
