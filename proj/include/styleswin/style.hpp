#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "styleswin/nn.hpp"

namespace styleswin {

enum class StyleVariant { AdaIN, AdaLN, AdaBN, AdaRMSNorm, ModulatedMLP, CrossAttention, None };

StyleVariant parse_style_variant(const std::string& name);
std::string to_string(StyleVariant variant);
/// Variants that replace the block's LayerNorms with a style-modulated norm.
bool is_ada_norm(StyleVariant variant);
/// Non-fatal configuration concerns (e.g. AdaBN with batch size 1).
std::optional<std::string> style_config_warning(StyleVariant variant, std::int64_t batch);

/// z -> w: `depth` linear layers, each followed by leaky ReLU(0.2).
struct MappingNetwork {
  std::vector<Linear> layers;

  static MappingNetwork init(std::int64_t z_dim, std::int64_t w_dim, std::int64_t depth, Rng& rng);
  Tensor operator()(const Tensor& z) const;
  std::int64_t z_dim() const { return layers.front().in_features(); }
  std::int64_t w_dim() const { return layers.back().out_features(); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct ScaleShift {
  Tensor gamma;  // [B, C]
  Tensor beta;   // [B, C]; undefined for scale-only styles
};

/// Learned affine w -> (γ_s, β); bias-initialized so γ_s ≈ 1 and β ≈ 0.
struct StyleAffine {
  Linear proj;
  std::int64_t channels = 0;
  bool with_shift = true;

  static StyleAffine init(std::int64_t w_dim, std::int64_t channels, bool with_shift, Rng& rng);
  ScaleShift operator()(const Tensor& w) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Modulate-after-normalize for [B,H,W,C] features with per-sample [B,C] styles.
Tensor adain(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor adaln(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor adabn(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// RMS over channels, scale only.
Tensor ada_rmsnorm(const Tensor& x, const Tensor& gamma, double eps = 1e-5);
Tensor ada_norm(StyleVariant variant, const Tensor& x, const ScaleShift& style);

/// Per-sample modulated + demodulated linear layer over the last axis of
/// x [B, ..., in]: weights scaled by s[b, i] on input rows, then each output
/// column normalized to unit L2 norm (eps-guarded).
Tensor modulated_linear(const Tensor& x, const Tensor& s, const Linear& layer,
                        double eps = 1e-8);

struct ModulatedFeedForward {
  FeedForward ffn;
  StyleAffine scale1;
  StyleAffine scale2;

  static ModulatedFeedForward init(std::int64_t dim, std::int64_t hidden, std::int64_t w_dim,
                                   Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& w) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Queries from feature tokens, keys/values from m style tokens affine(w).
struct CrossAttentionParams {
  std::int64_t dim = 0;
  std::int64_t heads = 0;
  std::int64_t tokens = 0;
  Linear style_tokens;  // w -> m·C
  Linear query;
  Linear key;
  Linear value;
  Linear output;

  static CrossAttentionParams init(std::int64_t dim, std::int64_t heads, std::int64_t tokens,
                                   std::int64_t w_dim, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// x + CrossAttention(x, style tokens) for x [B,H,W,C] and w [B,D_w].
Tensor cross_attention_style(const Tensor& x, const Tensor& w, const CrossAttentionParams& params);

}  // namespace styleswin
