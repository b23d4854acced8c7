#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geoclip/common.hpp"
#include "geoclip/geometry.hpp"
#include "geoclip/rng.hpp"

namespace geoclip {

enum class ClipKind { geoclip_full, geoclip_lowrank, adaclip, quantile, vanilla };

ClipKind clip_kind_from_string(const std::string& s);
std::string to_string(ClipKind kind);

struct ClipStrategyConfig {
  ClipKind kind = ClipKind::geoclip_full;
  double sigma = 0.0;               // noise multiplier at sensitivity 1
  std::optional<int> rank;          // geoclip_lowrank only
  std::optional<double> clip_norm;  // vanilla / quantile initial threshold
  double quantile_target = 0.5;
  std::optional<double> quantile_lr;  // quantile only
  double h1 = 1e-15;                  // eigenvalue clamp floor
  double h2 = 10.0;                   // eigenvalue clamp ceiling
  double beta1 = 0.99;                // mean decay
  double beta2 = 0.999;               // full/diag covariance decay
  double beta3 = 0.99;                // low-rank sketch decay
  bool scale_by_batch = true;         // low-rank residual scaling

  // Kind-specific optionals must be present exactly when required.
  void validate() const;
};

struct PrivatizedGradient {
  VectorXd value;
  double clipped_fraction = 0.0;  // samples whose clip bound was active
};

// One Gaussian release at sensitivity 1 with this noise multiplier.
struct GaussianRelease {
  double sigma;
};

// Transformed-space pipeline shared by geoclip and adaclip:
//   omega_i = forward (g_i - a); omega_i /= max(1, |omega_i|);
//   value = inverse ((sum_i omega_i + N) / B) + a,  N ~ N(0, sigma^2 I_k).
// The clipped sum has sensitivity 1 under add/remove adjacency for any a and
// forward, so sigma is the calibrated noise multiplier unchanged.
PrivatizedGradient geoclip_step(const MatrixXd& per_sample_grads,
                                const TransformPair& transform,
                                const VectorXd& mean, double sigma,
                                SplitRng& rng);

// Standard DP-SGD: per-sample norm clip at C in the original basis,
// noise N(0, sigma^2 C^2 I_d) on the sum, then the batch average.
PrivatizedGradient vanilla_step(const MatrixXd& per_sample_grads,
                                double clip_norm, double sigma, SplitRng& rng);

// Diagonal-covariance special case of geoclip_step: the spectrum is the
// per-coordinate variance vector (clamped to [h1, h2]) in the standard basis.
PrivatizedGradient adaclip_step(const MatrixXd& per_sample_grads,
                                const VectorXd& variance_diag,
                                const VectorXd& mean, double sigma,
                                SplitRng& rng, double h1 = 1e-15,
                                double h2 = 10.0);

// The transform adaclip_step uses, exposed for inspection.
TransformPair diagonal_transform(const VectorXd& variance_diag, double gamma,
                                 double h1, double h2);

struct QuantileClipState {
  double clip_norm = 1.0;
  double lr = 0.2;
  double target = 0.5;
  double count_sigma = 10.0;  // noise multiplier on the released raw count
};

// vanilla_step at the current threshold, then a geometric threshold update
// from the privately released fraction of samples at or below the threshold:
//   C <- C exp(-lr (b_hat - target)).
std::pair<PrivatizedGradient, QuantileClipState> quantile_step(
    const MatrixXd& per_sample_grads, const QuantileClipState& state,
    double sigma, SplitRng& rng);

// Diagnostic: expected squared noise injected back in the original basis,
// sigma^2 Tr((transpose(M) M)^-1). Full-rank transforms only.
double noise_for_budget(double sigma, const TransformPair& transform);

// Stateful wrapper: one object per training run, owning the estimator state
// and the current transform. step() privatizes a batch with the state as of
// the previous step, then folds the released gradient into the estimate.
class ClipStrategy {
 public:
  virtual ~ClipStrategy() = default;
  virtual PrivatizedGradient step(const MatrixXd& per_sample_grads,
                                  SplitRng& rng) = 0;
  // Releases the accountant must charge for one step() call.
  virtual std::vector<GaussianRelease> releases_per_step() const = 0;
  virtual const char* name() const = 0;
  // Introspection; null when the strategy has no transform / center.
  virtual const TransformPair* transform() const { return nullptr; }
  virtual const VectorXd* center() const { return nullptr; }
  virtual double current_clip_norm() const { return 1.0; }
  // Estimator snapshot; throws for strategies without estimator state.
  virtual void save_estimator(const std::string& path) const;
};

// batch_size feeds the estimator's batch-averaging correction; it is the
// nominal (expected) batch size, not the per-step realized one.
std::unique_ptr<ClipStrategy> make_strategy(const ClipStrategyConfig& config,
                                            Index dim, int batch_size);

}  // namespace geoclip
