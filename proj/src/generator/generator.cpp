#include "styleswin/generator.hpp"

#include <cmath>

namespace styleswin {

BlockAttention parse_block_attention(const std::string& name) {
  if (name == "double") return BlockAttention::Double;
  if (name == "swin") return BlockAttention::Swin;
  throw ConfigError("unknown block attention '" + name + "' (expected double or swin)");
}

std::string to_string(BlockAttention mode) {
  return mode == BlockAttention::Double ? "double" : "swin";
}

GeneratorConfig GeneratorConfig::desk(std::int64_t target_size) {
  static const ScaleSpec kDesk[] = {{128, 4, 8}, {128, 8, 8}, {64, 8, 4}, {32, 8, 4}};
  GeneratorConfig c;
  c.target_size = target_size;
  for (std::int64_t res = c.start_size, k = 0; res <= target_size; res *= 2, ++k) {
    if (k >= 4) throw ConfigError("desk generator config stops at 32x32, got " + std::to_string(target_size));
    c.scales.push_back(kDesk[k]);
  }
  c.validate();
  return c;
}

std::int64_t GeneratorConfig::num_scales() const {
  std::int64_t n = 0;
  for (std::int64_t res = start_size; res <= target_size; res *= 2) ++n;
  return n;
}

void GeneratorConfig::validate() const {
  if (start_size <= 0 || target_size < start_size) {
    throw ConfigError("generator: need 0 < start_size <= target_size, got " +
                      std::to_string(start_size) + " and " + std::to_string(target_size));
  }
  std::int64_t res = start_size;
  while (res < target_size) res *= 2;
  if (res != target_size) {
    throw ConfigError("generator: target_size " + std::to_string(target_size) +
                      " is not start_size·2^n for start_size " + std::to_string(start_size));
  }
  if (static_cast<std::int64_t>(scales.size()) != num_scales()) {
    throw ConfigError("generator: " + std::to_string(scales.size()) + " scale specs for " +
                      std::to_string(num_scales()) + " scales");
  }
  for (std::int64_t k = 0; k < num_scales(); ++k) {
    const ScaleSpec& s = scales[static_cast<std::size_t>(k)];
    const std::string where = "generator scale " + std::to_string(resolution(k)) + ": ";
    if (s.channels <= 0 || s.heads <= 0 || s.channels % s.heads != 0) {
      throw ConfigError(where + "head count " + std::to_string(s.heads) +
                        " must divide channel dim " + std::to_string(s.channels));
    }
    if (s.window <= 0 || s.window > resolution(k) || resolution(k) % s.window != 0) {
      throw ConfigError(where + "window " + std::to_string(s.window) +
                        " must divide the side length");
    }
    if (use_spe && s.channels % 4 != 0) {
      throw ConfigError(where + "SPE needs channels divisible by 4, got " +
                        std::to_string(s.channels));
    }
  }
  if (z_dim <= 0 || w_dim <= 0 || mapping_depth <= 0) {
    throw ConfigError("generator: z_dim, w_dim and mapping_depth must be positive");
  }
  if (!(mlp_ratio > 0)) throw ConfigError("generator: mlp_ratio must be positive");
  if (!(spe_divisor > 0)) throw ConfigError("generator: spe_divisor must be positive");
  if (style == StyleVariant::CrossAttention && style_tokens <= 0) {
    throw ConfigError("generator: cross-attention style needs style_tokens > 0");
  }
}

Tensor spe_encode(std::int64_t height, std::int64_t width, std::int64_t channels, double divisor) {
  if (channels <= 0 || channels % 4 != 0) {
    throw ConfigError("spe_encode: channels must be a positive multiple of 4, got " +
                      std::to_string(channels));
  }
  const std::int64_t half = channels / 2;
  std::vector<double> omega(static_cast<std::size_t>(half / 2));
  for (std::size_t k = 0; k < omega.size(); ++k) {
    omega[k] = 1.0 / std::pow(10000.0, 2.0 * double(k) / divisor);
  }
  Tensor out = Tensor::zeros({height, width, channels});
  auto d = out.mutable_data();
  for (std::int64_t i = 0; i < height; ++i) {
    for (std::int64_t j = 0; j < width; ++j) {
      double* px = &d[static_cast<std::size_t>((i * width + j) * channels)];
      for (std::size_t k = 0; k < omega.size(); ++k) {
        px[2 * k] = std::sin(omega[k] * double(i));
        px[2 * k + 1] = std::cos(omega[k] * double(i));
        px[half + 2 * k] = std::sin(omega[k] * double(j));
        px[half + 2 * k + 1] = std::cos(omega[k] * double(j));
      }
    }
  }
  return out;
}

StyledBlock StyledBlock::init(const GeneratorConfig& config, const ScaleSpec& spec,
                              AttentionKind kind, Rng& rng) {
  StyledBlock b;
  b.variant = config.style;
  b.kind = kind;
  const std::int64_t c = spec.channels;
  const auto hidden = static_cast<std::int64_t>(std::llround(double(c) * config.mlp_ratio));
  if (is_ada_norm(config.style)) {
    const bool shift = config.style != StyleVariant::AdaRMSNorm;
    b.style1 = StyleAffine::init(config.w_dim, c, shift, rng);
  } else {
    b.norm1 = LayerNormParams::identity(c);
  }
  b.attention = AttentionParams::init(c, spec.heads, spec.window, rng);
  if (config.style == StyleVariant::CrossAttention) {
    b.cross = CrossAttentionParams::init(c, spec.heads, config.style_tokens, config.w_dim, rng);
  }
  if (is_ada_norm(config.style)) {
    const bool shift = config.style != StyleVariant::AdaRMSNorm;
    b.style2 = StyleAffine::init(config.w_dim, c, shift, rng);
  } else {
    b.norm2 = LayerNormParams::identity(c);
  }
  if (config.style == StyleVariant::ModulatedMLP) {
    b.modulated_mlp = ModulatedFeedForward::init(c, hidden, config.w_dim, rng);
  } else {
    b.mlp = FeedForward::init(c, hidden, rng);
  }
  return b;
}

Tensor StyledBlock::operator()(const Tensor& x, const Tensor& w, bool use_rpe) const {
  const bool ada = is_ada_norm(variant);
  const Tensor h = ada ? ada_norm(variant, x, style1(w)) : norm1(x);
  Tensor a;
  switch (kind) {
    case AttentionKind::Regular: a = window_msa(h, attention, false, use_rpe); break;
    case AttentionKind::Shifted: a = window_msa(h, attention, true, use_rpe); break;
    case AttentionKind::Double: a = double_attention(h, attention, use_rpe); break;
  }
  Tensor mid = add(a, x);
  if (variant == StyleVariant::CrossAttention) mid = cross_attention_style(mid, w, cross);
  const Tensor h2 = ada ? ada_norm(variant, mid, style2(w)) : norm2(mid);
  const Tensor f = variant == StyleVariant::ModulatedMLP ? modulated_mlp(h2, w) : mlp(h2);
  return add(f, mid);
}

void StyledBlock::collect(const std::string& prefix, ParamList& out) const {
  const bool ada = is_ada_norm(variant);
  if (ada) {
    style1.collect(prefix + ".style1", out);
  } else {
    norm1.collect(prefix + ".norm1", out);
  }
  attention.collect(prefix + ".attn", out);
  if (variant == StyleVariant::CrossAttention) cross.collect(prefix + ".cross", out);
  if (ada) {
    style2.collect(prefix + ".style2", out);
  } else {
    norm2.collect(prefix + ".norm2", out);
  }
  if (variant == StyleVariant::ModulatedMLP) {
    modulated_mlp.collect(prefix + ".mlp", out);
  } else {
    mlp.collect(prefix + ".mlp", out);
  }
}

Generator::Generator(GeneratorConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const ScaleSpec& first = config_.scales.front();
  const std::int64_t s0 = config_.start_size;
  if (config_.style == StyleVariant::None) {
    latent_in_ = Linear::truncated(config_.z_dim, s0 * s0 * first.channels, rng);
  } else {
    mapping_ = MappingNetwork::init(config_.z_dim, config_.w_dim, config_.mapping_depth, rng);
    constant_ = randn({1, s0, s0, first.channels}, rng);
  }
  const AttentionKind k1 =
      config_.attention == BlockAttention::Double ? AttentionKind::Double : AttentionKind::Regular;
  const AttentionKind k2 =
      config_.attention == BlockAttention::Double ? AttentionKind::Double : AttentionKind::Shifted;
  for (std::int64_t k = 0; k < config_.num_scales(); ++k) {
    const ScaleSpec& spec = config_.scales[static_cast<std::size_t>(k)];
    GeneratorStage stage;
    stage.resolution = config_.resolution(k);
    if (k > 0) {
      const std::int64_t prev = config_.scales[static_cast<std::size_t>(k - 1)].channels;
      stage.project = Linear::truncated(prev, spec.channels, rng);
    }
    stage.block1 = StyledBlock::init(config_, spec, k1, rng);
    stage.block2 = StyledBlock::init(config_, spec, k2, rng);
    stage.to_rgb = {glorot_normal({spec.channels, 3}, spec.channels, 3, rng, 0.02),
                    Tensor::zeros({3})};
    if (config_.use_spe) {
      spe_.push_back(
          spe_encode(stage.resolution, stage.resolution, spec.channels, config_.spe_divisor));
    }
    stages_.push_back(std::move(stage));
  }
}

Tensor Generator::map(const Tensor& z) const {
  if (z.rank() != 2 || z.dim(1) != config_.z_dim) {
    throw ShapeError("generator: expected latents [B," + std::to_string(config_.z_dim) +
                     "], got " + shape_str(z.shape()));
  }
  return config_.style == StyleVariant::None ? z : mapping_(z);
}

Tensor Generator::forward(const Tensor& z) const { return synthesize(map(z)); }

Tensor Generator::synthesize(const Tensor& w) const {
  const std::int64_t b = w.dim(0);
  const std::int64_t s0 = config_.start_size;
  const std::int64_t c0 = config_.scales.front().channels;
  Tensor x = config_.style == StyleVariant::None
                 ? reshape(latent_in_(w), {b, s0, s0, c0})
                 : broadcast_to(constant_, {b, s0, s0, c0});
  Tensor rgb;
  for (std::size_t k = 0; k < stages_.size(); ++k) {
    const GeneratorStage& stage = stages_[k];
    if (k > 0) x = stage.project(upsample_bilinear2x(x));
    if (config_.use_spe) x = add(x, spe_[k]);
    x = stage.block1(x, w, config_.use_rpe);
    x = stage.block2(x, w, config_.use_rpe);
    if (!all_finite(x)) {
      throw NumericalError("generator: non-finite activations at scale " +
                           std::to_string(stage.resolution) + "x" +
                           std::to_string(stage.resolution));
    }
    const Tensor r = stage.to_rgb(x);
    rgb = rgb.defined() ? add(upsample_bilinear2x(rgb), r) : r;
  }
  return rgb;
}

ParamList Generator::parameters() const {
  ParamList out;
  if (config_.style == StyleVariant::None) {
    latent_in_.collect("input.latent", out);
  } else {
    mapping_.collect("mapping", out);
    out.emplace_back("input.constant", constant_);
  }
  for (std::size_t k = 0; k < stages_.size(); ++k) {
    const std::string p = "stage" + std::to_string(stages_[k].resolution);
    if (k > 0) stages_[k].project.collect(p + ".project", out);
    stages_[k].block1.collect(p + ".block1", out);
    stages_[k].block2.collect(p + ".block2", out);
    stages_[k].to_rgb.collect(p + ".to_rgb", out);
  }
  return out;
}

Generator Generator::clone() const {
  Rng scratch(0);
  Generator copy(config_, scratch);
  copy_values(copy.parameters(), parameters());
  return copy;
}

void Generator::set_constant_input(const Tensor& x) {
  if (!constant_.defined() || x.shape() != constant_.shape()) {
    throw ShapeError("generator: constant input must have shape " +
                     (constant_.defined() ? shape_str(constant_.shape()) : std::string("(none)")));
  }
  auto dst = constant_.mutable_data();
  auto src = x.data();
  std::copy(src.begin(), src.end(), dst.begin());
}

Tensor latent_lerp(const Tensor& z0, const Tensor& z1, double t) {
  if (z0.shape() != z1.shape()) {
    throw ShapeError("latent_lerp: shapes " + shape_str(z0.shape()) + " and " +
                     shape_str(z1.shape()) + " differ");
  }
  if (!(t >= 0.0 && t <= 1.0)) throw ContractError("latent_lerp: t must lie in [0, 1]");
  return add(mul_scalar(z0, 1.0 - t), mul_scalar(z1, t));
}

}  // namespace styleswin
