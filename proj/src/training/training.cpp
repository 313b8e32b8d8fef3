#include "styleswin/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace styleswin {

void TrainConfig::validate() const {
  if (!(lr_g >= 0) || !(lr_d >= 0)) throw ConfigError("learning rates must be >= 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam eps must be > 0");
  if (r1_interval < 1) throw ConfigError("r1_interval must be >= 1");
  if (r1_gamma < 0 || bcr_lambda_real < 0 || bcr_lambda_fake < 0 || tv_weight_initial < 0)
    throw ConfigError("loss weights must be >= 0");
  if (ema_decay < 0 || ema_decay > 1) throw ConfigError("ema_decay must lie in [0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (total_iters < 0) throw ConfigError("total_iters must be >= 0");
}

void AugmentationSpec::validate() const {
  for (double p : {flip_p, color_p, translation_p, cutout_p}) {
    if (!(p >= 0 && p <= 1)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
  }
  if (translation_frac < 0 || translation_frac > 0.5)
    throw ConfigError("translation_frac must lie in [0, 0.5]");
  if (cutout_frac < 0 || cutout_frac > 1) throw ConfigError("cutout_frac must lie in [0, 1]");
}

TrainingFault::TrainingFault(std::string term, std::int64_t iteration)
    : NumericalError("training: non-finite " + term + " at iteration " +
                     std::to_string(iteration)),
      term_(std::move(term)),
      iteration_(iteration) {}

Tensor loss_d(const Tensor& real_logits, const Tensor& fake_logits) {
  // -log σ(r) = softplus(-r);  -log(1 - σ(f)) = softplus(f).
  return mean(softplus(neg(real_logits))) + mean(softplus(fake_logits));
}

Tensor loss_g(const Tensor& fake_logits) { return mean(softplus(neg(fake_logits))); }

Tensor r1_penalty_from(const Tensor& logits, const Tensor& real, double gamma) {
  const Tensor g = grad(sum(logits), {real}, /*create_graph=*/true)[0];
  std::vector<std::int64_t> axes;
  for (std::int64_t a = 1; a < g.rank(); ++a) axes.push_back(a);
  return mean(sum(square(g), axes)) * gamma;
}

Tensor r1_penalty(const DiscriminatorFn& d, const Tensor& real, double gamma) {
  EnableGradGuard enable;
  Tensor x = real.detach();
  x.set_requires_grad(true);
  return r1_penalty_from(d(x), x, gamma);
}

Tensor augment(const Tensor& batch, const AugmentationSpec& spec, Rng& rng) {
  if (batch.rank() != 4) throw ShapeError("augment expects [B,H,W,C]");
  const std::int64_t b = batch.dim(0), h = batch.dim(1), w = batch.dim(2), c = batch.dim(3);
  const auto src = batch.data();
  Tensor out = Tensor::zeros(batch.shape());
  auto dst = out.mutable_data();
  std::vector<double> img(h * w * c), tmp(h * w * c);
  const std::int64_t max_shift_y = std::int64_t(std::floor(double(h) * spec.translation_frac));
  const std::int64_t max_shift_x = std::int64_t(std::floor(double(w) * spec.translation_frac));
  const std::int64_t cut_h = std::int64_t(std::round(double(h) * spec.cutout_frac));
  const std::int64_t cut_w = std::int64_t(std::round(double(w) * spec.cutout_frac));
  auto idx = [&](std::int64_t y, std::int64_t x, std::int64_t ch) { return (y * w + x) * c + ch; };

  for (std::int64_t n = 0; n < b; ++n) {
    std::copy_n(src.begin() + n * h * w * c, h * w * c, img.begin());
    if (rng.bernoulli(spec.flip_p)) {
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          for (std::int64_t ch = 0; ch < c; ++ch) tmp[idx(y, x, ch)] = img[idx(y, w - 1 - x, ch)];
      img.swap(tmp);
    }
    if (rng.bernoulli(spec.color_p)) {
      const double brightness = rng.uniform(-0.5, 0.5);
      std::vector<double> scale(c);
      for (auto& s : scale) s = rng.uniform(0.5, 1.5);
      for (std::int64_t i = 0; i < h * w; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch)
          img[i * c + ch] = img[i * c + ch] * scale[ch] + brightness;
    }
    if (rng.bernoulli(spec.translation_p)) {
      const std::int64_t dy = rng.uniform_int(-max_shift_y, max_shift_y);
      const std::int64_t dx = rng.uniform_int(-max_shift_x, max_shift_x);
      std::fill(tmp.begin(), tmp.end(), 0.0);
      for (std::int64_t y = 0; y < h; ++y) {
        const std::int64_t sy = y - dy;
        if (sy < 0 || sy >= h) continue;
        for (std::int64_t x = 0; x < w; ++x) {
          const std::int64_t sx = x - dx;
          if (sx < 0 || sx >= w) continue;
          for (std::int64_t ch = 0; ch < c; ++ch) tmp[idx(y, x, ch)] = img[idx(sy, sx, ch)];
        }
      }
      img.swap(tmp);
    }
    if (rng.bernoulli(spec.cutout_p) && cut_h > 0 && cut_w > 0) {
      const std::int64_t y0 = rng.uniform_int(0, h - cut_h);
      const std::int64_t x0 = rng.uniform_int(0, w - cut_w);
      for (std::int64_t y = y0; y < y0 + cut_h; ++y)
        for (std::int64_t x = x0; x < x0 + cut_w; ++x)
          for (std::int64_t ch = 0; ch < c; ++ch) img[idx(y, x, ch)] = 0.0;
    }
    std::copy(img.begin(), img.end(), dst.begin() + n * h * w * c);
  }
  return out;
}

Tensor bcr_loss(const DiscriminatorFn& d, const Tensor& real, const Tensor& fake,
                const Tensor& real_logits, const Tensor& fake_logits,
                const AugmentationSpec& spec, double lambda_real, double lambda_fake, Rng& rng) {
  const Tensor real_aug = augment(real, spec, rng);
  const Tensor fake_aug = augment(fake, spec, rng);
  Tensor total = Tensor::zeros({});
  if (lambda_real > 0) total = total + mean(square(real_logits - d(real_aug))) * lambda_real;
  if (lambda_fake > 0) total = total + mean(square(fake_logits - d(fake_aug))) * lambda_fake;
  return total;
}

Tensor bcr_loss(const DiscriminatorFn& d, const Tensor& real, const Tensor& fake,
                const AugmentationSpec& spec, double lambda_real, double lambda_fake, Rng& rng) {
  return bcr_loss(d, real, fake, d(real), d(fake), spec, lambda_real, lambda_fake, rng);
}

AdamState AdamState::zeros_like(const std::vector<Tensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros(p.shape()));
    s.v.push_back(Tensor::zeros(p.shape()));
  }
  return s;
}

void adam_step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ContractError("adam_step: parameter, gradient and state counts differ");
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, double(state.step));
  const double c2 = 1.0 - std::pow(beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    if (grads[i].shape() != p.shape()) throw ContractError("adam_step: gradient shape mismatch");
    auto pd = p.mutable_data();
    auto m = state.m[i].mutable_data();
    auto v = state.v[i].mutable_data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < pd.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      pd[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  }
}

void ema_update(const ParamList& ema, const ParamList& live, double decay) {
  if (ema.size() != live.size()) throw ContractError("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < ema.size(); ++i) {
    if (ema[i].first != live[i].first || ema[i].second.shape() != live[i].second.shape())
      throw ContractError("ema_update: mismatch at " + ema[i].first);
    Tensor e = ema[i].second;
    auto ed = e.mutable_data();
    const auto ld = live[i].second.data();
    for (std::size_t j = 0; j < ed.size(); ++j) ed[j] = decay * ed[j] + (1.0 - decay) * ld[j];
  }
}

std::pair<double, double> lr_schedule(std::int64_t iter, const TrainConfig& config) {
  const std::int64_t start = config.lr_decay_start < 0 ? config.total_iters : config.lr_decay_start;
  if (iter < start) return {config.lr_g, config.lr_d};
  if (iter >= config.total_iters) return {0.0, 0.0};
  const double f = double(config.total_iters - iter) / double(config.total_iters - start);
  return {config.lr_g * f, config.lr_d * f};
}

double tv_weight(std::int64_t iter, const TrainConfig& config) {
  const std::int64_t end =
      config.tv_anneal_end_iter < 0 ? config.total_iters : config.tv_anneal_end_iter;
  if (iter >= end || end <= 0) return 0.0;
  return config.tv_weight_initial * double(end - iter) / double(end);
}

double global_norm(const std::vector<Tensor>& tensors) {
  double s = 0;
  for (const auto& t : tensors)
    for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

bool bit_identical(const MetricsRow& a, const MetricsRow& b) {
  auto same = [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; };
  return a.iter == b.iter && same(a.loss_d, b.loss_d) && same(a.loss_g, b.loss_g) &&
         same(a.r1, b.r1) && same(a.bcr, b.bcr) && same(a.tv, b.tv) && same(a.lr_g, b.lr_g) &&
         same(a.lr_d, b.lr_d) && same(a.grad_norm_g, b.grad_norm_g) &&
         same(a.grad_norm_d, b.grad_norm_d) && same(a.blocking_score, b.blocking_score) &&
         same(a.proxy_distance, b.proxy_distance);
}

RngStreams RngStreams::from_seed(std::uint64_t seed) {
  return {Rng::stream(seed, "latent"), Rng::stream(seed, "augment"), Rng::stream(seed, "data")};
}

namespace {

void require_grads(const ParamList& params) {
  for (const auto& [name, t] : params) {
    Tensor h = t;
    h.set_requires_grad(true);
  }
}

void check_finite(const Tensor& t, const char* term, std::int64_t iter) {
  if (!all_finite(t)) throw TrainingFault(term, iter);
}

}  // namespace

Trainer::Trainer(const GeneratorConfig& g_config, const DiscriminatorConfig& d_config,
                 TrainConfig config, AugmentationSpec augmentation)
    : config_(config), augmentation_(augmentation), rng_(RngStreams::from_seed(config.seed)) {
  config_.validate();
  augmentation_.validate();
  Rng g_init = Rng::stream(config_.seed, "init.generator");
  Rng d_init = Rng::stream(config_.seed, "init.discriminator");
  g_ = Generator(g_config, g_init);
  d_ = Discriminator(d_config, d_init);
  g_ema_ = g_.clone();
  require_grads(g_.parameters());
  require_grads(d_.parameters());
  adam_g_ = AdamState::zeros_like(tensors_of(g_.parameters()));
  adam_d_ = AdamState::zeros_like(tensors_of(d_.parameters()));
}

Tensor Trainer::sample_latents(std::int64_t n) {
  return randn({n, g_.config().z_dim}, rng_.latent);
}

MetricsRow Trainer::step(const Tensor& real_batch) {
  EnableGradGuard enable;
  const std::int64_t it = iteration_;
  const std::int64_t b = real_batch.dim(0);
  const auto [lr_g, lr_d] = lr_schedule(it, config_);
  MetricsRow row;
  row.iter = it;
  row.lr_g = lr_g;
  row.lr_d = lr_d;
  const DiscriminatorFn d = [this](const Tensor& x) { return d_.forward(x); };

  // Discriminator update.
  Tensor fake;
  {
    NoGradGuard no_grad;
    fake = g_.forward(sample_latents(b));
  }
  check_finite(fake, "generator output", it);
  d_.power_iteration();
  const bool do_r1 = config_.r1_gamma > 0 && it % config_.r1_interval == 0;
  Tensor real = real_batch.detach();
  if (do_r1) real.set_requires_grad(true);
  const Tensor real_logits = d(real);
  const Tensor fake_logits = d(fake);
  Tensor total_d = loss_d(real_logits, fake_logits);
  row.loss_d = total_d.item();
  check_finite(total_d, "loss_d", it);
  if (do_r1) {
    const Tensor r1 = r1_penalty_from(real_logits, real, config_.r1_gamma);
    row.r1 = r1.item();
    check_finite(r1, "r1", it);
    total_d = total_d + r1 * double(config_.r1_interval);
  }
  if (config_.bcr_enabled) {
    const Tensor bcr = bcr_loss(d, real_batch, fake, real_logits, fake_logits, augmentation_,
                                config_.bcr_lambda_real, config_.bcr_lambda_fake, rng_.augment);
    row.bcr = bcr.item();
    check_finite(bcr, "bcr", it);
    total_d = total_d + bcr;
  }
  const auto d_params = tensors_of(d_.parameters());
  const auto d_grads = grad(total_d, d_params);
  row.grad_norm_d = global_norm(d_grads);
  adam_step(d_params, d_grads, adam_d_, lr_d, config_.beta1, config_.beta2, config_.adam_eps);

  // Generator update.
  const Tensor gen = g_.forward(sample_latents(b));
  Tensor total_g = loss_g(d(gen));
  row.loss_g = total_g.item();
  check_finite(total_g, "loss_g", it);
  const double tv_w = config_.tv_enabled ? tv_weight(it, config_) : 0.0;
  if (tv_w > 0) {
    const Tensor tv = tv_loss(gen);
    row.tv = tv.item();
    check_finite(tv, "tv", it);
    total_g = total_g + tv * tv_w;
  }
  const auto g_params = tensors_of(g_.parameters());
  const auto g_grads = grad(total_g, g_params);
  row.grad_norm_g = global_norm(g_grads);
  adam_step(g_params, g_grads, adam_g_, lr_g, config_.beta1, config_.beta2, config_.adam_eps);

  ema_update(g_ema_.parameters(), g_.parameters(), config_.ema_decay);
  ++iteration_;
  return row;
}

}  // namespace styleswin
