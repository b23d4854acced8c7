#pragma once

#include <cstdint>
#include <string>

#include "geoclip/common.hpp"

namespace geoclip {

// Exponential moving estimates of the released-gradient mean and covariance.
// The covariance update uses the mean from *before* the step's mean update;
// observe() applies the two in that order.
struct FullCovState {
  VectorXd mean;
  MatrixXd cov;
  double beta1 = 0.99;
  double beta2 = 0.999;
  int batch_size = 1;
  std::uint64_t steps = 0;

  static FullCovState init(Index d, double beta1 = 0.99, double beta2 = 0.999,
                           int batch_size = 1);
  Index dim() const { return mean.size(); }
  void observe(const VectorXd& g);
};

// Diagonal-covariance counterpart: tracks per-coordinate variance only.
struct DiagCovState {
  VectorXd mean;
  VectorXd var;
  double beta1 = 0.99;
  double beta2 = 0.999;
  int batch_size = 1;
  std::uint64_t steps = 0;

  static DiagCovState init(Index d, double beta1 = 0.99, double beta2 = 0.999,
                           int batch_size = 1);
  Index dim() const { return mean.size(); }
  void observe(const VectorXd& g);
};

// Rank-k sketch of the covariance: orthonormal basis (d x k) plus eigenvalue
// estimates, folded forward one observation at a time without ever forming a
// d x d matrix. Each update costs O(d k^2 + k^3).
struct LowRankState {
  VectorXd mean;
  MatrixXd basis;
  VectorXd values;
  double beta1 = 0.99;
  double beta3 = 0.99;
  int batch_size = 1;
  bool scale_by_batch = true;
  std::uint64_t steps = 0;

  static LowRankState init(Index d, Index k, double beta1 = 0.99,
                           double beta3 = 0.99, int batch_size = 1,
                           bool scale_by_batch = true);
  Index dim() const { return mean.size(); }
  Index rank() const { return basis.cols(); }
  void observe(const VectorXd& g);
};

// mean' = beta1 * mean + (1 - beta1) * g
VectorXd update_mean(const VectorXd& mean, const VectorXd& g, double beta1);

// cov' = beta2 * cov + batch_size * (1 - beta2) * (g - mean)(g - mean)^T,
// evaluated at the state's current (pre-update) mean. Mean is not touched.
FullCovState update_cov_full(const FullCovState& state, const VectorXd& g);

// sqrt(batch_size) * (g - mean): the residual whose outer product carries the
// batch-averaging correction.
VectorXd batch_effective_residual(const VectorXd& g, const VectorXd& mean,
                                  int batch_size);

// Mean update followed by the rank-k sketch update against the *new* mean.
LowRankState streaming_rank_k_update(const LowRankState& state,
                                     const VectorXd& g);

// Core sketch step: fold residual z into (basis, values) as
//   span([basis * diag(sqrt(beta3 * values)) | sqrt(1 - beta3) * z])
// truncated back to rank k via QR + small SVD. Exposed for direct testing.
void lowrank_fold(MatrixXd& basis, VectorXd& values, const VectorXd& z,
                  double beta3);

// Binary checkpoints: fixed header (kind, dimensions, counters, decay rates)
// followed by row-major little-endian float64 payloads. Round-trips bit-exact.
void save_state(const FullCovState& state, const std::string& path);
void save_state(const DiagCovState& state, const std::string& path);
void save_state(const LowRankState& state, const std::string& path);
FullCovState load_full_state(const std::string& path);
DiagCovState load_diag_state(const std::string& path);
LowRankState load_lowrank_state(const std::string& path);

}  // namespace geoclip
