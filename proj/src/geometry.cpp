#include "geoclip/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace geoclip {

void EigenPairs::validate(double tol) const {
  require(vectors.cols() == values.size(),
          "geometry: vector/value count mismatch");
  require(vectors.cols() <= vectors.rows(), "geometry: rank exceeds dimension");
  for (Index i = 0; i < values.size(); ++i) {
    require(values[i] >= 0.0, "geometry: negative eigenvalue");
    if (i > 0)
      require(values[i - 1] >= values[i], "geometry: eigenvalues not sorted");
  }
  MatrixXd gram = vectors.transpose() * vectors;
  gram -= MatrixXd::Identity(rank(), rank());
  require(gram.cwiseAbs().maxCoeff() <= tol,
          "geometry: columns not orthonormal");
}

EigenPairs eigendecompose(const MatrixXd& cov) {
  require(cov.rows() == cov.cols(), "geometry: covariance not square");
  MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  require(es.info() == Eigen::Success, "geometry: eigendecomposition failed");
  Index d = cov.rows();
  EigenPairs out;
  out.vectors = es.eigenvectors().rowwise().reverse();
  out.values = es.eigenvalues().reverse();
  // Symmetric solve can return tiny negatives for rank-deficient inputs.
  for (Index i = 0; i < d; ++i) out.values[i] = std::max(out.values[i], 0.0);
  return out;
}

EigenPairs clamp_eigenvalues(const EigenPairs& pairs, double lo, double hi) {
  require(lo > 0.0 && hi >= lo, "geometry: clamp bounds must satisfy 0 < lo <= hi");
  EigenPairs out = pairs;
  for (Index i = 0; i < out.values.size(); ++i)
    out.values[i] = std::min(std::max(out.values[i], lo), hi);
  return out;
}

TransformPair optimal_transform(const EigenPairs& pairs, double gamma) {
  require(gamma > 0.0, "geometry: gamma must be positive");
  require(pairs.rank() > 0, "geometry: empty spectrum");
  double s = 0.0;
  for (Index i = 0; i < pairs.values.size(); ++i) {
    require(pairs.values[i] > 0.0,
            "geometry: optimal transform needs strictly positive eigenvalues");
    s += std::sqrt(pairs.values[i]);
  }
  double scale = std::sqrt(gamma / s);
  Index k = pairs.rank();
  VectorXd quarter(k), inv_quarter(k);
  for (Index i = 0; i < k; ++i) {
    quarter[i] = std::pow(pairs.values[i], 0.25);
    inv_quarter[i] = 1.0 / quarter[i];
  }
  TransformPair t;
  t.gamma = gamma;
  t.forward = scale * inv_quarter.asDiagonal() * pairs.vectors.transpose();
  t.inverse = (1.0 / scale) * pairs.vectors * quarter.asDiagonal();
  t.clamp_lo = pairs.values.minCoeff();
  t.clamp_hi = pairs.values.maxCoeff();
  return t;
}

TransformPair optimal_transform_clamped(const EigenPairs& pairs, double gamma,
                                        double lo, double hi) {
  TransformPair t = optimal_transform(clamp_eigenvalues(pairs, lo, hi), gamma);
  t.clamp_lo = lo;
  t.clamp_hi = hi;
  return t;
}

TransformPair identity_transform(Index d) {
  require(d > 0, "geometry: dimension must be positive");
  TransformPair t;
  t.forward = MatrixXd::Identity(d, d);
  t.inverse = MatrixXd::Identity(d, d);
  t.gamma = 1.0;
  t.clamp_lo = 1.0;
  t.clamp_hi = 1.0;
  return t;
}

VectorXd transformed_covariance_diag(const EigenPairs& pairs, double gamma) {
  require(gamma > 0.0, "geometry: gamma must be positive");
  Index k = pairs.rank();
  VectorXd root(k);
  for (Index i = 0; i < k; ++i) root[i] = std::sqrt(pairs.values[i]);
  double s = root.sum();
  require(s > 0.0, "geometry: zero spectrum has no transform");
  return (gamma / s) * root;
}

double geoclip_objective(const VectorXd& values, double gamma) {
  require(gamma > 0.0, "geometry: gamma must be positive");
  double s = 0.0;
  for (Index i = 0; i < values.size(); ++i) {
    require(values[i] >= 0.0, "geometry: negative eigenvalue");
    s += std::sqrt(values[i]);
  }
  return s * s / gamma;
}

double whitening_objective(const VectorXd& values, double gamma) {
  require(gamma > 0.0, "geometry: gamma must be positive");
  double d = static_cast<double>(values.size());
  return d * values.sum() / gamma;
}

}  // namespace geoclip
