#include "geoclip/privatizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geoclip/estimator.hpp"

namespace geoclip {

namespace {

constexpr double kClipBudget = 1.0;   // gamma in the transform objective
constexpr double kCountSigma = 10.0;  // quantile count-release multiplier

void check_batch_dims(const MatrixXd& grads, Index d) {
  require(grads.rows() > 0, "privatizer: empty batch");
  require(grads.cols() == d, "privatizer: gradient dimension mismatch");
}

}  // namespace

ClipKind clip_kind_from_string(const std::string& s) {
  if (s == "geoclip_full") return ClipKind::geoclip_full;
  if (s == "geoclip_lowrank") return ClipKind::geoclip_lowrank;
  if (s == "adaclip") return ClipKind::adaclip;
  if (s == "quantile") return ClipKind::quantile;
  if (s == "vanilla") return ClipKind::vanilla;
  throw std::invalid_argument("privatizer: unknown strategy '" + s + "'");
}

std::string to_string(ClipKind kind) {
  switch (kind) {
    case ClipKind::geoclip_full: return "geoclip_full";
    case ClipKind::geoclip_lowrank: return "geoclip_lowrank";
    case ClipKind::adaclip: return "adaclip";
    case ClipKind::quantile: return "quantile";
    case ClipKind::vanilla: return "vanilla";
  }
  throw std::invalid_argument("privatizer: unknown strategy kind");
}

void ClipStrategyConfig::validate() const {
  require(sigma >= 0.0, "privatizer: negative noise multiplier");
  require(h1 > 0.0 && h2 >= h1, "privatizer: clamp bounds must satisfy 0 < h1 <= h2");
  require(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1 && beta3 > 0 &&
              beta3 < 1,
          "privatizer: decay rates must lie in (0, 1)");
  bool needs_rank = kind == ClipKind::geoclip_lowrank;
  require(rank.has_value() == needs_rank,
          needs_rank ? "privatizer: geoclip_lowrank requires rank"
                     : "privatizer: rank is only valid for geoclip_lowrank");
  if (rank) require(*rank > 0, "privatizer: rank must be positive");
  bool needs_clip = kind == ClipKind::vanilla || kind == ClipKind::quantile;
  require(clip_norm.has_value() == needs_clip,
          needs_clip ? "privatizer: this strategy requires clip_norm"
                     : "privatizer: clip_norm is only valid for vanilla/quantile");
  if (clip_norm) require(*clip_norm > 0, "privatizer: clip_norm must be positive");
  bool needs_qlr = kind == ClipKind::quantile;
  require(quantile_lr.has_value() == needs_qlr,
          needs_qlr ? "privatizer: quantile requires quantile_lr"
                    : "privatizer: quantile_lr is only valid for quantile");
  if (quantile_lr) require(*quantile_lr > 0, "privatizer: quantile_lr must be positive");
  require(quantile_target > 0.0 && quantile_target < 1.0,
          "privatizer: quantile_target must lie in (0, 1)");
}

PrivatizedGradient geoclip_step(const MatrixXd& per_sample_grads,
                                const TransformPair& transform,
                                const VectorXd& mean, double sigma,
                                SplitRng& rng) {
  Index d = transform.dim();
  Index k = transform.rank();
  check_batch_dims(per_sample_grads, d);
  require(mean.size() == d, "privatizer: center dimension mismatch");
  require(sigma >= 0.0, "privatizer: negative noise multiplier");
  Index b = per_sample_grads.rows();

  MatrixXd omega = (per_sample_grads.rowwise() - mean.transpose()) *
                   transform.forward.transpose();
  Index clipped = 0;
  for (Index i = 0; i < b; ++i) {
    double nrm = omega.row(i).norm();
    if (nrm > 1.0) {
      omega.row(i) /= nrm;
      ++clipped;
    }
  }
  VectorXd sum = omega.colwise().sum().transpose();
  if (sigma > 0.0) sum += rng.gaussian_vector(k, sigma);
  VectorXd omega_tilde = sum / static_cast<double>(b);

  PrivatizedGradient out;
  out.value = transform.inverse * omega_tilde + mean;
  out.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(b);
  return out;
}

PrivatizedGradient vanilla_step(const MatrixXd& per_sample_grads,
                                double clip_norm, double sigma,
                                SplitRng& rng) {
  require(clip_norm > 0.0, "privatizer: clip_norm must be positive");
  require(sigma >= 0.0, "privatizer: negative noise multiplier");
  require(per_sample_grads.rows() > 0, "privatizer: empty batch");
  Index b = per_sample_grads.rows();
  Index d = per_sample_grads.cols();

  VectorXd sum = VectorXd::Zero(d);
  Index clipped = 0;
  for (Index i = 0; i < b; ++i) {
    double nrm = per_sample_grads.row(i).norm();
    if (nrm > clip_norm) {
      sum += per_sample_grads.row(i).transpose() * (clip_norm / nrm);
      ++clipped;
    } else {
      sum += per_sample_grads.row(i).transpose();
    }
  }
  if (sigma > 0.0) sum += rng.gaussian_vector(d, sigma * clip_norm);

  PrivatizedGradient out;
  out.value = sum / static_cast<double>(b);
  out.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(b);
  return out;
}

TransformPair diagonal_transform(const VectorXd& variance_diag, double gamma,
                                 double h1, double h2) {
  Index d = variance_diag.size();
  require(d > 0, "privatizer: empty variance vector");
  std::vector<Index> order(d);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return variance_diag[a] > variance_diag[b];
  });
  EigenPairs pairs;
  pairs.vectors = MatrixXd::Zero(d, d);
  pairs.values.resize(d);
  for (Index i = 0; i < d; ++i) {
    pairs.vectors(order[i], i) = 1.0;
    pairs.values[i] = variance_diag[order[i]];
  }
  return optimal_transform_clamped(pairs, gamma, h1, h2);
}

PrivatizedGradient adaclip_step(const MatrixXd& per_sample_grads,
                                const VectorXd& variance_diag,
                                const VectorXd& mean, double sigma,
                                SplitRng& rng, double h1, double h2) {
  TransformPair t = diagonal_transform(variance_diag, kClipBudget, h1, h2);
  return geoclip_step(per_sample_grads, t, mean, sigma, rng);
}

std::pair<PrivatizedGradient, QuantileClipState> quantile_step(
    const MatrixXd& per_sample_grads, const QuantileClipState& state,
    double sigma, SplitRng& rng) {
  require(state.clip_norm > 0.0, "privatizer: clip_norm must be positive");
  require(state.lr > 0.0, "privatizer: quantile lr must be positive");
  PrivatizedGradient pg =
      vanilla_step(per_sample_grads, state.clip_norm, sigma, rng);

  Index b = per_sample_grads.rows();
  double below = 0.0;  // samples the clip bound left untouched
  for (Index i = 0; i < b; ++i)
    if (per_sample_grads.row(i).norm() <= state.clip_norm) below += 1.0;
  if (state.count_sigma > 0.0) below += state.count_sigma * rng.gaussian();
  double b_hat = below / static_cast<double>(b);

  QuantileClipState next = state;
  next.clip_norm = state.clip_norm * std::exp(-state.lr * (b_hat - state.target));
  return {std::move(pg), next};
}

void ClipStrategy::save_estimator(const std::string&) const {
  throw std::invalid_argument("privatizer: strategy has no estimator state");
}

double noise_for_budget(double sigma, const TransformPair& transform) {
  require(sigma >= 0.0, "privatizer: negative noise multiplier");
  require(transform.rank() == transform.dim(),
          "privatizer: noise diagnostic needs a full-rank transform");
  // Tr((M^T M)^-1) = |M^-1|_F^2, and inverse holds M^-1 at full rank.
  return sigma * sigma * transform.inverse.squaredNorm();
}

// ---------------------------------------------------------------------------
// Stateful strategies

namespace {

class GeoClipFullStrategy final : public ClipStrategy {
 public:
  GeoClipFullStrategy(const ClipStrategyConfig& cfg, Index d, int batch_size)
      : cfg_(cfg),
        est_(FullCovState::init(d, cfg.beta1, cfg.beta2, batch_size)),
        transform_(identity_transform(d)) {}

  PrivatizedGradient step(const MatrixXd& grads, SplitRng& rng) override {
    PrivatizedGradient pg =
        geoclip_step(grads, transform_, est_.mean, cfg_.sigma, rng);
    est_.observe(pg.value);
    transform_ = optimal_transform_clamped(eigendecompose(est_.cov),
                                           kClipBudget, cfg_.h1, cfg_.h2);
    return pg;
  }

  std::vector<GaussianRelease> releases_per_step() const override {
    return {{cfg_.sigma}};
  }
  const char* name() const override { return "geoclip_full"; }
  const TransformPair* transform() const override { return &transform_; }
  const VectorXd* center() const override { return &est_.mean; }
  void save_estimator(const std::string& path) const override {
    save_state(est_, path);
  }

 private:
  ClipStrategyConfig cfg_;
  FullCovState est_;
  TransformPair transform_;
};

class GeoClipLowRankStrategy final : public ClipStrategy {
 public:
  GeoClipLowRankStrategy(const ClipStrategyConfig& cfg, Index d, int batch_size)
      : cfg_(cfg),
        est_(LowRankState::init(d, *cfg.rank, cfg.beta1, cfg.beta3, batch_size,
                                cfg.scale_by_batch)) {
    rebuild();
  }

  PrivatizedGradient step(const MatrixXd& grads, SplitRng& rng) override {
    PrivatizedGradient pg =
        geoclip_step(grads, transform_, est_.mean, cfg_.sigma, rng);
    est_.observe(pg.value);
    rebuild();
    return pg;
  }

  std::vector<GaussianRelease> releases_per_step() const override {
    return {{cfg_.sigma}};
  }
  const char* name() const override { return "geoclip_lowrank"; }
  const TransformPair* transform() const override { return &transform_; }
  const VectorXd* center() const override { return &est_.mean; }
  void save_estimator(const std::string& path) const override {
    save_state(est_, path);
  }

 private:
  void rebuild() {
    EigenPairs pairs;
    pairs.vectors = est_.basis;
    pairs.values = est_.values;
    transform_ = optimal_transform_clamped(pairs, kClipBudget, cfg_.h1, cfg_.h2);
  }

  ClipStrategyConfig cfg_;
  LowRankState est_;
  TransformPair transform_;
};

class AdaClipStrategy final : public ClipStrategy {
 public:
  AdaClipStrategy(const ClipStrategyConfig& cfg, Index d, int batch_size)
      : cfg_(cfg),
        est_(DiagCovState::init(d, cfg.beta1, cfg.beta2, batch_size)),
        transform_(identity_transform(d)) {}

  PrivatizedGradient step(const MatrixXd& grads, SplitRng& rng) override {
    PrivatizedGradient pg =
        geoclip_step(grads, transform_, est_.mean, cfg_.sigma, rng);
    est_.observe(pg.value);
    transform_ = diagonal_transform(est_.var, kClipBudget, cfg_.h1, cfg_.h2);
    return pg;
  }

  std::vector<GaussianRelease> releases_per_step() const override {
    return {{cfg_.sigma}};
  }
  const char* name() const override { return "adaclip"; }
  const TransformPair* transform() const override { return &transform_; }
  const VectorXd* center() const override { return &est_.mean; }
  void save_estimator(const std::string& path) const override {
    save_state(est_, path);
  }

 private:
  ClipStrategyConfig cfg_;
  DiagCovState est_;
  TransformPair transform_;
};

class VanillaStrategy final : public ClipStrategy {
 public:
  VanillaStrategy(const ClipStrategyConfig& cfg, Index d) : cfg_(cfg), dim_(d) {}

  PrivatizedGradient step(const MatrixXd& grads, SplitRng& rng) override {
    check_batch_dims(grads, dim_);
    return vanilla_step(grads, *cfg_.clip_norm, cfg_.sigma, rng);
  }

  std::vector<GaussianRelease> releases_per_step() const override {
    return {{cfg_.sigma}};
  }
  const char* name() const override { return "vanilla"; }
  double current_clip_norm() const override { return *cfg_.clip_norm; }

 private:
  ClipStrategyConfig cfg_;
  Index dim_;
};

class QuantileStrategy final : public ClipStrategy {
 public:
  QuantileStrategy(const ClipStrategyConfig& cfg, Index d) : cfg_(cfg), dim_(d) {
    state_.clip_norm = *cfg.clip_norm;
    state_.lr = *cfg.quantile_lr;
    state_.target = cfg.quantile_target;
    state_.count_sigma = kCountSigma;
  }

  PrivatizedGradient step(const MatrixXd& grads, SplitRng& rng) override {
    check_batch_dims(grads, dim_);
    auto [pg, next] = quantile_step(grads, state_, cfg_.sigma, rng);
    state_ = next;
    return pg;
  }

  std::vector<GaussianRelease> releases_per_step() const override {
    return {{cfg_.sigma}, {state_.count_sigma}};
  }
  const char* name() const override { return "quantile"; }
  double current_clip_norm() const override { return state_.clip_norm; }

 private:
  ClipStrategyConfig cfg_;
  Index dim_;
  QuantileClipState state_;
};

}  // namespace

std::unique_ptr<ClipStrategy> make_strategy(const ClipStrategyConfig& config,
                                            Index dim, int batch_size) {
  config.validate();
  require(dim > 0, "privatizer: dimension must be positive");
  require(batch_size > 0, "privatizer: batch size must be positive");
  switch (config.kind) {
    case ClipKind::geoclip_full:
      return std::make_unique<GeoClipFullStrategy>(config, dim, batch_size);
    case ClipKind::geoclip_lowrank:
      require(*config.rank <= dim, "privatizer: rank exceeds dimension");
      return std::make_unique<GeoClipLowRankStrategy>(config, dim, batch_size);
    case ClipKind::adaclip:
      return std::make_unique<AdaClipStrategy>(config, dim, batch_size);
    case ClipKind::quantile:
      return std::make_unique<QuantileStrategy>(config, dim);
    case ClipKind::vanilla:
      return std::make_unique<VanillaStrategy>(config, dim);
  }
  throw std::invalid_argument("privatizer: unknown strategy kind");
}

}  // namespace geoclip
