#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "styleswin/discriminator.hpp"
#include "styleswin/generator.hpp"

namespace styleswin {

struct TrainConfig {
  double lr_g = 5e-5;
  double lr_d = 2e-4;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  double r1_gamma = 10.0;
  std::int64_t r1_interval = 16;
  bool bcr_enabled = true;
  double bcr_lambda_real = 10.0;
  double bcr_lambda_fake = 10.0;
  bool tv_enabled = false;
  double tv_weight_initial = 10.0;
  /// Iteration at which the TV weight reaches 0; negative means total_iters.
  std::int64_t tv_anneal_end_iter = -1;
  double ema_decay = 0.9978;
  std::int64_t batch_size = 8;
  std::int64_t total_iters = 500;
  /// Negative means total_iters (no decay).
  std::int64_t lr_decay_start = -1;
  std::uint64_t seed = 7;

  double lr_ratio() const { return lr_d / lr_g; }
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct AugmentationSpec {
  double flip_p = 0.5;
  double color_p = 1.0;
  double translation_p = 1.0;
  double cutout_p = 1.0;
  double translation_frac = 1.0 / 8.0;
  double cutout_frac = 1.0 / 2.0;

  static AugmentationSpec identity() { return {0.0, 0.0, 0.0, 0.0}; }
  void validate() const;
  bool operator==(const AugmentationSpec&) const = default;
};

/// Raised when a loss term goes non-finite; names the term and iteration.
class TrainingFault : public NumericalError {
 public:
  TrainingFault(std::string term, std::int64_t iteration);
  const std::string& term() const { return term_; }
  std::int64_t iteration() const { return iteration_; }

 private:
  std::string term_;
  std::int64_t iteration_;
};

using DiscriminatorFn = std::function<Tensor(const Tensor&)>;

/// Non-saturating logistic losses in softplus form; logits of any shape.
Tensor loss_d(const Tensor& real_logits, const Tensor& fake_logits);
Tensor loss_g(const Tensor& fake_logits);

/// γ · mean_b ||∇_x D(x)_b||², with the gradient kept differentiable.
Tensor r1_penalty(const DiscriminatorFn& d, const Tensor& real, double gamma);
/// Same penalty from an existing forward: `real` must be the leaf that
/// produced `logits`.
Tensor r1_penalty_from(const Tensor& logits, const Tensor& real, double gamma);

/// Per-image flip / color / translation / cutout; values only (no history).
Tensor augment(const Tensor& batch, const AugmentationSpec& spec, Rng& rng);

/// λ_r·mean(D(x)−D(aug x))² + λ_f·mean(D(G z)−D(aug G z))².
Tensor bcr_loss(const DiscriminatorFn& d, const Tensor& real, const Tensor& fake,
                const AugmentationSpec& spec, double lambda_real, double lambda_fake, Rng& rng);
/// Variant reusing already computed logits of the un-augmented batches.
Tensor bcr_loss(const DiscriminatorFn& d, const Tensor& real, const Tensor& fake,
                const Tensor& real_logits, const Tensor& fake_logits,
                const AugmentationSpec& spec, double lambda_real, double lambda_fake, Rng& rng);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const std::vector<Tensor>& params);
};

/// Bias-corrected Adam; writes parameters in place.
void adam_step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps = 1e-8);

/// ema ← decay·ema + (1−decay)·live, matched by name.
void ema_update(const ParamList& ema, const ParamList& live, double decay);

/// (lr_G, lr_D) at `iter`: constant, then linear to 0 at total_iters.
std::pair<double, double> lr_schedule(std::int64_t iter, const TrainConfig& config);
/// TV weight: linear from tv_weight_initial to 0 at the anneal end.
double tv_weight(std::int64_t iter, const TrainConfig& config);

double global_norm(const std::vector<Tensor>& tensors);

struct MetricsRow {
  std::int64_t iter = 0;
  double loss_d = 0, loss_g = 0, r1 = 0, bcr = 0, tv = 0;
  double lr_g = 0, lr_d = 0;
  double grad_norm_g = 0, grad_norm_d = 0;
  /// Filled periodically by the driver; NaN when not evaluated.
  double blocking_score = std::numeric_limits<double>::quiet_NaN();
  double proxy_distance = std::numeric_limits<double>::quiet_NaN();
};

/// Field-wise bit equality (NaN equals NaN).
bool bit_identical(const MetricsRow& a, const MetricsRow& b);

/// Per-purpose random streams derived from the run seed.
struct RngStreams {
  Rng latent;
  Rng augment;
  Rng data;

  static RngStreams from_seed(std::uint64_t seed);
};

/// Everything a training run mutates: networks, EMA copy, optimizer moments,
/// random streams and the iteration counter.
class Trainer {
 public:
  Trainer(const GeneratorConfig& g_config, const DiscriminatorConfig& d_config,
          TrainConfig config, AugmentationSpec augmentation);

  /// One D update then one G update then the EMA update.
  MetricsRow step(const Tensor& real);

  const TrainConfig& config() const { return config_; }
  const AugmentationSpec& augmentation() const { return augmentation_; }
  std::int64_t iteration() const { return iteration_; }
  void set_iteration(std::int64_t iteration) { iteration_ = iteration; }

  const Generator& generator() const { return g_; }
  const Generator& ema() const { return g_ema_; }
  const Discriminator& discriminator() const { return d_; }
  AdamState& adam_g() { return adam_g_; }
  AdamState& adam_d() { return adam_d_; }
  const AdamState& adam_g() const { return adam_g_; }
  const AdamState& adam_d() const { return adam_d_; }
  RngStreams& rng() { return rng_; }
  const RngStreams& rng() const { return rng_; }

  /// Latent batch from the latent stream.
  Tensor sample_latents(std::int64_t n);

 private:
  TrainConfig config_;
  AugmentationSpec augmentation_;
  RngStreams rng_;
  Generator g_;
  Generator g_ema_;
  Discriminator d_;
  AdamState adam_g_;
  AdamState adam_d_;
  std::int64_t iteration_ = 0;
};

}  // namespace styleswin
