#include "geoclip/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "geoclip/common.hpp"

namespace geoclip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// log(expm1(x)) for x > 0 without overflow or cancellation.
double log_expm1(double x) {
  if (x > 0.693) return x + std::log1p(-std::exp(-x));
  return std::log(std::expm1(x));
}

// log(erfc(x)); erfc underflows past ~26.5, so switch to the asymptotic
// expansion while the direct value is still comfortably normal.
double log_erfc(double x) {
  if (x < 25.0) return std::log(std::erfc(x));
  double inv = 1.0 / (2.0 * x * x);
  double s = 1.0 + inv * (-1.0 + inv * (3.0 + inv * (-15.0 + inv * 105.0)));
  return -x * x - std::log(x) - 0.57236494292470008707 + std::log(s);
}

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

// log(e^a - e^b) for a >= b; the series below only subtracts terms that are
// strictly smaller than the running sum.
double log_sub(double a, double b) {
  if (b == -kInf) return a;
  require(a >= b, "accountant: log_sub would go negative");
  if (a == b) return -kInf;
  return a + std::log1p(-std::exp(b - a));
}

double log_binom(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Integer alpha: A(alpha) = sum_k C(alpha,k) q^k (1-q)^(alpha-k)
// exp(k(k-1)/(2 sigma^2)). The k = 0,1 terms carry factor exp(0) = 1, so
// A - 1 = sum_{k>=2} C(alpha,k) q^k (1-q)^(alpha-k) expm1(k(k-1)/(2 sigma^2)),
// a sum of positive terms: no cancellation at any magnitude.
double rdp_integer(double sigma, double q, std::int64_t alpha) {
  double log_q = std::log(q);
  double log_1mq = std::log1p(-q);
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double lse = -kInf;
  for (std::int64_t k = 2; k <= alpha; ++k) {
    double term = log_binom(static_cast<double>(alpha), static_cast<double>(k)) +
                  k * log_q + (alpha - k) * log_1mq +
                  log_expm1(k * (k - 1) * inv2s2);
    lse = log_add(lse, term);
  }
  double log_a;  // log(A) = log1p(A - 1)
  if (lse > 709.0) {
    log_a = lse;
  } else {
    log_a = std::log1p(std::exp(lse));
  }
  return log_a / (alpha - 1.0);
}

// Fractional alpha: two-sided series with the Gaussian integral split at
// z0 = sigma^2 log(1/q - 1) + 1/2. Terms past ceil(alpha) alternate in sign
// (generalized binomial), handled by log-space subtraction.
double rdp_fractional(double sigma, double q, double alpha) {
  double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  double log_q = std::log(q);
  double log_1mq = std::log1p(-q);
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double sqrt2s = std::sqrt(2.0) * sigma;
  double log_half = -0.69314718055994530942;

  double log_a0 = -kInf, log_a1 = -kInf;
  // Generalized binomial via the recurrence binom(a, i+1) = binom(a, i) *
  // (a - i) / (i + 1); past i = ceil(alpha) the sign alternates, handled by
  // log-space subtraction. Tail decay is only polynomial (~i^-(alpha+2)) for
  // small alpha, hence the large iteration budget.
  double log_coef = 0.0;
  bool positive = true;
  for (int i = 0;; ++i) {
    double di = static_cast<double>(i);
    double j = alpha - di;
    double log_t0 = log_coef + di * log_q + j * log_1mq;
    double log_t1 = log_coef + j * log_q + di * log_1mq;
    double log_e0 = log_half + log_erfc((di - z0) / sqrt2s);
    double log_e1 = log_half + log_erfc((z0 - j) / sqrt2s);
    double log_s0 = log_t0 + di * (di - 1.0) * inv2s2 + log_e0;
    double log_s1 = log_t1 + j * (j - 1.0) * inv2s2 + log_e1;
    if (positive) {
      log_a0 = log_add(log_a0, log_s0);
      log_a1 = log_add(log_a1, log_s1);
    } else {
      log_a0 = log_sub(log_a0, log_s0);
      log_a1 = log_sub(log_a1, log_s1);
    }
    if (di > alpha && std::max(log_s0, log_s1) < -40.0) break;
    require_io(i < 10000000, "accountant: series failed to converge");
    double f = (alpha - di) / (di + 1.0);
    if (f < 0) positive = !positive;
    log_coef += std::log(std::abs(f));
  }
  return log_add(log_a0, log_a1) / (alpha - 1.0);
}

double log_inv_delta_over(double delta, double alpha) {
  return std::log(1.0 / delta) / (alpha - 1.0);
}

}  // namespace

void PrivacySpec::validate() const {
  require(sigma > 0.0, "accountant: sigma must be positive");
  require(sample_rate > 0.0 && sample_rate <= 1.0,
          "accountant: sample rate must lie in (0, 1]");
  require(steps >= 0, "accountant: negative step count");
  require(delta > 0.0 && delta < 1.0, "accountant: delta must lie in (0, 1)");
}

double rdp_subsampled_gaussian(double sigma, double q, double alpha) {
  require(sigma > 0.0, "accountant: sigma must be positive");
  require(q > 0.0 && q <= 1.0, "accountant: sample rate must lie in (0, 1]");
  require(alpha > 1.0, "accountant: order must exceed 1");
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  double rounded = std::nearbyint(alpha);
  if (alpha == rounded)
    return rdp_integer(sigma, q, static_cast<std::int64_t>(rounded));
  return rdp_fractional(sigma, q, alpha);
}

const std::vector<double>& rdp_order_grid() {
  static const std::vector<double> grid = [] {
    std::vector<double> g;
    for (int i = 0;; ++i) {
      double a = 1.25 + 0.25 * i;
      if (a > 64.0) break;
      g.push_back(a);
    }
    return g;
  }();
  return grid;
}

double epsilon_of(const PrivacySpec& spec) {
  return epsilon_of(spec, rdp_order_grid());
}

double epsilon_of(const PrivacySpec& spec, const std::vector<double>& orders) {
  spec.validate();
  require(!orders.empty(), "accountant: empty order grid");
  if (spec.steps == 0) return 0.0;
  double best = kInf;
  for (double a : orders) {
    double rho = rdp_subsampled_gaussian(spec.sigma, spec.sample_rate, a);
    best = std::min(best, spec.steps * rho + log_inv_delta_over(spec.delta, a));
  }
  return best;
}

double compose_heterogeneous(const std::vector<PrivacySpec>& specs) {
  require(!specs.empty(), "accountant: nothing to compose");
  double delta = specs.front().delta;
  std::int64_t total_steps = 0;
  for (const auto& s : specs) {
    s.validate();
    require(s.delta == delta, "accountant: mismatched deltas in composition");
    total_steps += s.steps;
  }
  if (total_steps == 0) return 0.0;
  double best = kInf;
  for (double a : rdp_order_grid()) {
    double acc = 0.0;
    for (const auto& s : specs) {
      if (s.steps == 0) continue;
      acc += s.steps * rdp_subsampled_gaussian(s.sigma, s.sample_rate, a);
    }
    best = std::min(best, acc + log_inv_delta_over(delta, a));
  }
  return best;
}

double sigma_for_target(double epsilon_target, double q, std::int64_t steps,
                        double delta) {
  require(epsilon_target > 0.0, "accountant: target epsilon must be positive");
  require(steps > 0, "accountant: target needs at least one step");
  double lo = 0.3, hi = 100.0;
  auto eps = [&](double sigma) {
    return epsilon_of({sigma, q, steps, delta});
  };
  double e_lo = eps(lo), e_hi = eps(hi);
  require(epsilon_target <= e_lo && epsilon_target >= e_hi,
          "accountant: target epsilon unattainable for sigma in [0.3, 100]");
  double tol = 1e-3 * epsilon_target;
  double mid = lo;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    double e = eps(mid);
    if (std::abs(e - epsilon_target) <= tol) return mid;
    if (e > epsilon_target)
      lo = mid;  // need more noise
    else
      hi = mid;
  }
  return mid;
}

EpsilonCurve epsilon_curve(const PrivacySpec& spec,
                           const std::vector<std::int64_t>& eval_steps) {
  spec.validate();
  // rho does not depend on the step count; evaluate the grid once.
  std::vector<double> rho;
  rho.reserve(rdp_order_grid().size());
  for (double a : rdp_order_grid())
    rho.push_back(rdp_subsampled_gaussian(spec.sigma, spec.sample_rate, a));
  EpsilonCurve curve;
  for (std::int64_t t : eval_steps) {
    require(t >= 0, "accountant: negative step count");
    double e = 0.0;
    if (t > 0) {
      e = kInf;
      const auto& grid = rdp_order_grid();
      for (std::size_t i = 0; i < grid.size(); ++i)
        e = std::min(e, t * rho[i] + log_inv_delta_over(spec.delta, grid[i]));
    }
    curve.points.emplace_back(t, e);
  }
  return curve;
}

void write_epsilon_curve_csv(const EpsilonCurve& curve,
                             const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  require_io(os.is_open(), "accountant: cannot write " + path);
  os << "step,epsilon\n";
  char buf[64];
  for (const auto& [step, eps] : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g", eps);
    os << step << ',' << buf << '\n';
  }
  require_io(os.good(), "accountant: short write to " + path);
}

}  // namespace geoclip
