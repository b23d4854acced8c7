#pragma once

#include <cstdint>
#include <string>

#include "geoclip/common.hpp"

namespace geoclip {

enum class ModelKind { linear_regression, logistic_binary, softmax };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind kind);

// Parameter layout: (weights..., bias) per class, classes concatenated.
// Inputs are augmented internally with a trailing 1.
struct ModelSpec {
  ModelKind kind = ModelKind::linear_regression;
  Index input_dim = 0;
  int classes = 2;  // softmax only

  Index param_count() const;
  void validate() const;
};

struct Standardization {
  VectorXd mean;    // per feature column, fit on the training split
  VectorXd stddev;  // zero-variance columns get divisor 1
  double target_lo = 0.0;
  double target_hi = 1.0;
  bool target_minmax = false;
};

struct Dataset {
  MatrixXd features;  // n x p
  VectorXd targets;   // reals, or integer class ids stored as doubles
  std::string name;
  bool classification = false;
  int classes = 2;
  bool target_minmax = false;  // request: min-max targets to [0,1] at split time
  Standardization standardization;

  Index n() const { return features.rows(); }
  Index p() const { return features.cols(); }
  void validate() const;
};

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitDataset {
  Dataset train, val, test;
};

// Exact analytic per-sample gradients, one row per sample, d columns:
//   linear regression: (theta . xhat - y) xhat, loss 0.5 (yhat - y)^2
//   binary logistic:   (sigmoid(theta . xhat) - y) xhat
//   softmax, block i:  (p_i - [y == i]) xhat
MatrixXd per_sample_gradients(const ModelSpec& model, const VectorXd& theta,
                              const MatrixXd& X, const VectorXd& y);
VectorXd per_sample_gradient(const ModelSpec& model, const VectorXd& theta,
                             const VectorXd& x, double y);

// Mean training objective: squared-error halves for regression, negative
// log-likelihood for classifiers.
double mean_loss(const ModelSpec& model, const VectorXd& theta,
                 const MatrixXd& X, const VectorXd& y);

// Reported quality: mean squared error for regression, accuracy percentage
// for classifiers.
double evaluation_metric(const ModelSpec& model, const VectorXd& theta,
                         const MatrixXd& X, const VectorXd& y);

// Gaussian features where the first corr_block columns share a latent factor
// (pairwise correlation rho^2) and the rest are independent. Target is a
// unit-variance linear signal plus Gaussian noise of scale noise_scale.
Dataset gen_synthetic_regression(Index n = 20000, Index p = 10,
                                 Index corr_block = 5, std::uint64_t seed = 0,
                                 double rho = 0.8, double noise_scale = 0.1);

// Same feature model; binary labels by thresholding the sigmoid of the noisy
// linear signal at 1/2.
Dataset gen_synthetic_classification(Index n = 20000, Index p = 400,
                                     Index corr_block = 50,
                                     std::uint64_t seed = 0, double rho = 0.8,
                                     double noise_scale = 0.1);

// Sidecar describing how to interpret a CSV.
struct CsvSchema {
  std::string target_column;  // name (with header) or zero-based index
  bool classification = false;
  bool target_minmax = false;
  bool has_header = true;
};

CsvSchema load_schema(const std::string& path);

// Parses and validates; rejects NaN/Inf, ragged rows, and non-numeric cells
// with diagnostics naming the line. Standardization happens later, in
// split(), against training statistics only.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Seed-deterministic disjoint split (floor(train), floor(val), remainder),
// followed by feature standardization fit on the train split and applied to
// all three. Regression targets are min-max scaled to [0,1] from train
// statistics when the dataset asks for it.
SplitDataset split(const Dataset& data, const SplitSpec& spec);

// Raw CSV emission (header x0..x{p-1},target), for the data generator CLI.
void write_dataset_csv(const Dataset& data, const std::string& path);

}  // namespace geoclip
