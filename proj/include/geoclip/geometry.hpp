#pragma once

#include "geoclip/common.hpp"

namespace geoclip {

// Spectral summary of a covariance: orthonormal directions (columns) and the
// matching eigenvalues sorted in descending order. rank() may be below dim()
// for low-rank summaries.
struct EigenPairs {
  MatrixXd vectors;  // d x k, orthonormal columns
  VectorXd values;   // k, descending, nonnegative

  Index dim() const { return vectors.rows(); }
  Index rank() const { return vectors.cols(); }
  void validate(double tol = 1e-8) const;
};

// Basis-change pair used by the clipping pipeline: forward maps gradients into
// the clipping space (k x d), inverse maps noised results back (d x k).
// forward * inverse == identity on the rank-k space.
struct TransformPair {
  MatrixXd forward;
  MatrixXd inverse;
  double gamma = 1.0;
  double clamp_lo = 1.0;  // eigenvalue bounds the pair was built from
  double clamp_hi = 1.0;

  Index dim() const { return forward.cols(); }
  Index rank() const { return forward.rows(); }
};

// Symmetrizes the input and returns the full spectrum, descending.
EigenPairs eigendecompose(const MatrixXd& cov);

// Clamps every eigenvalue into [lo, hi]; directions are untouched.
EigenPairs clamp_eigenvalues(const EigenPairs& pairs, double lo, double hi);

// Minimizer of the post-noise error proxy Tr((transpose(M) M)^-1) subject to
// the clipping-budget constraint Tr(M Sigma transpose(M)) = gamma:
//   forward = sqrt(gamma / s) Lambda^{-1/4} transpose(U),  s = sum_i sqrt(lambda_i)
//   inverse = sqrt(s / gamma) U Lambda^{1/4}
// All eigenvalues must be strictly positive (clamp first).
TransformPair optimal_transform(const EigenPairs& pairs, double gamma);

// clamp_eigenvalues followed by optimal_transform, recording the bounds used.
TransformPair optimal_transform_clamped(const EigenPairs& pairs, double gamma,
                                        double lo, double hi);

// Identity pair: the transform state before any covariance evidence exists.
TransformPair identity_transform(Index d);

// Diagonal of forward * Sigma * transpose(forward) at the optimum:
// gamma * sqrt(lambda_i) / sum_j sqrt(lambda_j). Sums to gamma exactly.
VectorXd transformed_covariance_diag(const EigenPairs& pairs, double gamma);

// Objective value (sum_i sqrt(lambda_i))^2 / gamma attained by the optimal
// transform.
double geoclip_objective(const VectorXd& values, double gamma);

// Objective value d * sum_i lambda_i / gamma attained by plain whitening
// scaled to the same constraint. Never below geoclip_objective; equal only
// for a constant spectrum.
double whitening_objective(const VectorXd& values, double gamma);

}  // namespace geoclip
