#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "geoclip/accountant.hpp"
#include "geoclip/common.hpp"
#include "geoclip/modeling.hpp"
#include "geoclip/privatizer.hpp"

namespace geoclip {

struct DatasetConfig {
  std::string kind;  // synthetic_regression | synthetic_classification | csv
  Index n = 20000;
  Index p = 10;
  Index corr_block = 5;
  std::uint64_t gen_seed = 0;
  double rho = 0.8;
  double noise_scale = 0.1;
  std::string path;    // csv only
  std::string schema;  // csv only
  std::uint64_t split_seed = 0;

  void validate() const;
};

struct RunConfig {
  DatasetConfig dataset;
  ModelKind model = ModelKind::linear_regression;
  std::optional<int> classes;  // softmax; defaults to the dataset's
  ClipStrategyConfig strategy;
  double learning_rate = 0.1;
  int batch_size = 32;
  std::int64_t epochs = 0;      // exactly one of epochs/iterations positive
  std::int64_t iterations = 0;
  std::vector<std::uint64_t> seeds;
  double delta = 1e-5;
  std::optional<double> epsilon_target;  // calibrates sigma when set
  std::string out_dir;
  std::optional<std::string> save_estimator;  // estimator snapshot path

  void validate() const;
};

struct SweepConfig {
  RunConfig base;  // shared dataset / model / strategy knobs / privacy
  std::vector<ClipKind> strategies;
  std::vector<double> sigmas;    // budget axis: exactly one of these
  std::vector<double> epsilons;  // two lists is nonempty
  std::vector<double> lr_grid;
  std::vector<double> h2_grid;    // transformed strategies
  std::vector<double> clip_grid;  // vanilla
  std::vector<std::uint64_t> tuning_seeds;
  std::vector<std::uint64_t> report_seeds;
  int workers = 1;

  void validate() const;
};

struct EvalRow {
  std::int64_t step;
  double loss;     // train split, at the current parameters
  double metric;   // test split: MSE or accuracy %
  double epsilon;  // cumulative, all releases composed
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;
  double final_val_metric = 0.0;
  std::int64_t gradient_releases = 0;
  std::int64_t count_releases = 0;
  double sigma_used = 0.0;
  double wall_seconds = 0.0;  // never emitted; CSV outputs stay deterministic
};

struct SweepCell {
  ClipKind strategy = ClipKind::vanilla;
  double budget = 0.0;  // as declared on the sweep axis (sigma or epsilon)
  double sigma = 0.0;
  double epsilon = 0.0;  // composed, full horizon
  double learning_rate = 0.0;
  double h2 = std::numeric_limits<double>::quiet_NaN();
  double clip_norm = std::numeric_limits<double>::quiet_NaN();
  double quantile_lr = std::numeric_limits<double>::quiet_NaN();
  double metric_mean = 0.0;
  double metric_std = 0.0;
  std::vector<RunRecord> records;
};

struct TrainGeometry {
  std::int64_t steps_per_epoch = 0;
  std::int64_t total_steps = 0;
  double sample_rate = 1.0;
};

// ceil(n_train / batch_size) steps per epoch; Poisson rate batch/n_train.
TrainGeometry train_geometry(const RunConfig& config, Index n_train);

// Materializes and splits the configured dataset (standardized per train
// statistics inside split()).
SplitDataset load_split(const DatasetConfig& config);
Dataset load_raw(const DatasetConfig& config);  // unsplit, for gen-data

// One full training run. Per step: Poisson-sample a batch, per-sample
// gradients, strategy step (which privatizes and then updates its own
// estimator/transform), gradient descent on the released gradient. Evaluates
// per epoch for epoch-based runs and per iteration otherwise, with a row at
// step 0. Aborts with a diagnostic when the loss leaves the finite range.
RunRecord train(const RunConfig& config, const SplitDataset& data,
                std::uint64_t seed);

// Grid-tunes each (strategy, budget) cell on the validation split over the
// configured tuning seeds, then measures the winner on the report seeds.
std::vector<SweepCell> sweep(const SweepConfig& config,
                             const SplitDataset& data);

// run-mode artifacts: metrics_<seed>.csv per seed, epsilon_curve.csv,
// single-cell summary.csv.
void emit(const RunConfig& config, const std::vector<RunRecord>& records);

// sweep-mode artifacts: per-cell subdirectory of run artifacts plus the
// aggregated summary.csv.
void emit(const SweepConfig& config, const std::vector<SweepCell>& cells);

// Flat sectioned key-value text. `overrides` entries look like
// "section.key=value" and are applied before validation.
RunConfig parse_run_config(const std::string& path,
                           const std::vector<std::string>& overrides = {});
SweepConfig parse_sweep_config(const std::string& path,
                               const std::vector<std::string>& overrides = {});
DatasetConfig parse_dataset_config(const std::string& path,
                                   const std::vector<std::string>& overrides = {});

// True when the [sweep] section is present.
bool config_has_sweep(const std::string& path);

}  // namespace geoclip
