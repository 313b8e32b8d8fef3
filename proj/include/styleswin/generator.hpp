#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "styleswin/attention.hpp"
#include "styleswin/style.hpp"

namespace styleswin {

enum class BlockAttention { Double, Swin };

BlockAttention parse_block_attention(const std::string& name);
std::string to_string(BlockAttention mode);

struct ScaleSpec {
  std::int64_t channels = 0;
  std::int64_t window = 0;
  std::int64_t heads = 0;

  bool operator==(const ScaleSpec&) const = default;
};

struct GeneratorConfig {
  std::int64_t start_size = 4;
  std::int64_t target_size = 32;
  /// One entry per resolution start_size·2^k up to target_size.
  std::vector<ScaleSpec> scales;
  StyleVariant style = StyleVariant::AdaIN;
  BlockAttention attention = BlockAttention::Double;
  bool use_spe = true;
  bool use_rpe = true;
  std::int64_t z_dim = 128;
  std::int64_t w_dim = 128;
  std::int64_t mapping_depth = 8;
  double mlp_ratio = 4.0;
  /// ω_k = 1 / 10000^(2k / spe_divisor).
  double spe_divisor = 1.0;
  std::int64_t style_tokens = 4;

  /// Desk-scale miniature: 4→8→16→32 with C 128/128/64/32, κ 4/8/8/8,
  /// h 8/8/4/4, truncated to `target_size`.
  static GeneratorConfig desk(std::int64_t target_size = 32);
  std::int64_t num_scales() const;
  std::int64_t resolution(std::int64_t scale) const { return start_size << scale; }
  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

/// Sinusoidal positional encoding [H, W, C]: first C/2 channels interleave
/// sin/cos of ω_k·i (row), the last C/2 of ω_k·j (column).
Tensor spe_encode(std::int64_t height, std::int64_t width, std::int64_t channels,
                  double divisor = 1.0);

/// Transformer block with the configured style injection.
struct StyledBlock {
  StyleVariant variant = StyleVariant::AdaIN;
  AttentionKind kind = AttentionKind::Double;
  LayerNormParams norm1;
  LayerNormParams norm2;
  StyleAffine style1;
  StyleAffine style2;
  AttentionParams attention;
  FeedForward mlp;
  ModulatedFeedForward modulated_mlp;
  CrossAttentionParams cross;

  static StyledBlock init(const GeneratorConfig& config, const ScaleSpec& spec, AttentionKind kind,
                          Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& w, bool use_rpe) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct GeneratorStage {
  std::int64_t resolution = 0;
  Linear project;  // upsample projection from the previous scale; unused at scale 0
  StyledBlock block1;
  StyledBlock block2;
  Linear to_rgb;
};

class Generator {
 public:
  Generator() = default;
  Generator(GeneratorConfig config, Rng& rng);

  const GeneratorConfig& config() const { return config_; }

  /// Style code for each latent; identity for the mapping-free baseline.
  Tensor map(const Tensor& z) const;
  /// Unconstrained RGB [B,S,S,3]; apply tanh for display.
  Tensor forward(const Tensor& z) const;
  /// Synthesis from given style codes (or latents for the baseline).
  Tensor synthesize(const Tensor& w) const;

  /// Deep copy with independent parameter storage.
  Generator clone() const;
  ParamList parameters() const;
  std::int64_t parameter_count() const { return styleswin::parameter_count(parameters()); }

  /// Replaces the learned constant input (tests and probes).
  void set_constant_input(const Tensor& x);
  const Tensor& constant_input() const { return constant_; }

 private:
  GeneratorConfig config_;
  MappingNetwork mapping_;
  Tensor constant_;   // [1, s0, s0, C0]
  Linear latent_in_;  // baseline: z -> s0·s0·C0
  std::vector<GeneratorStage> stages_;
  std::vector<Tensor> spe_;
};

Tensor latent_lerp(const Tensor& z0, const Tensor& z1, double t);

}  // namespace styleswin
