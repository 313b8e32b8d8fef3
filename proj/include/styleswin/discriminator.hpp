#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "styleswin/nn.hpp"

namespace styleswin {

/// Orthonormal 2x2 Haar bands of [B,H,W,C]; each band is [B,H/2,W/2,C].
/// With a,b the top pixel pair and c,d the bottom pair of a block:
/// LL=(a+b+c+d)/2, LH=(a+b-c-d)/2, HL=(a-b+c-d)/2, HH=(a-b-c+d)/2.
struct HaarCoeffs {
  Tensor ll;
  Tensor lh;
  Tensor hl;
  Tensor hh;
};

HaarCoeffs haar_dwt(const Tensor& x);
Tensor haar_idwt(const HaarCoeffs& bands);
/// Band-major channel packing [B,H/2,W/2,4C]: LL, LH, HL, HH.
Tensor haar_dwt_packed(const Tensor& x);
Tensor haar_idwt_packed(const Tensor& packed);

/// Power-iteration state for one weight matrix viewed as [in, out].
struct SpectralNorm {
  Tensor u;  // [out]
  Tensor v;  // [in]

  static SpectralNorm init(std::int64_t in, std::int64_t out, Rng& rng);
  /// One power-iteration step; updates u and v in place. Not differentiated.
  void power_iteration(const Tensor& weight);
  /// σ estimate vᵀ W u, differentiable in W.
  Tensor sigma(const Tensor& weight) const;
  /// weight / σ, guarding σ below eps.
  Tensor normalize(const Tensor& weight, double eps = 1e-12) const;
};

/// One power-iteration step followed by normalization.
Tensor spectral_normalize(const Tensor& weight, SpectralNorm& state);

/// Anisotropic total variation: mean |Δ_row| + mean |Δ_col| over forward
/// differences of [B,H,W,C].
Tensor tv_loss(const Tensor& img);

enum class DiscriminatorKind { Conv, Wavelet, Patch };

DiscriminatorKind parse_discriminator_kind(const std::string& name);
std::string to_string(DiscriminatorKind kind);

struct DiscriminatorConfig {
  DiscriminatorKind kind = DiscriminatorKind::Wavelet;
  std::int64_t image_size = 32;
  /// channels[i] is the width at resolution image_size / 2^i.
  std::vector<std::int64_t> channels = {32, 64, 128, 128, 128};
  bool spectral_norm = true;
  /// Wavelet only: add the conv discriminator's logit (spatial + wavelet).
  bool combine_spatial = false;
  /// Patch only: number of stride-2 stages; output grid is S / 2^stages.
  std::int64_t patch_stages = 2;

  std::int64_t channels_at(std::int64_t level) const;
  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

/// Convolution via im2col; weight is [k·k·C_in, C_out].
struct Conv2d {
  Tensor weight;
  Tensor bias;  // undefined when bias-free
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  bool use_sn = false;
  SpectralNorm sn;

  static Conv2d init(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                     bool bias, bool spectral_norm, Rng& rng);
  Tensor effective_weight() const;
  Tensor operator()(const Tensor& x) const;
};

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(DiscriminatorConfig config, Rng& rng);

  const DiscriminatorConfig& config() const { return config_; }

  /// Logits [B] for conv/wavelet, [B,P,P] for patch.
  Tensor forward(const Tensor& img) const;
  /// One spectral-norm power-iteration step for every layer.
  void power_iteration();

  ParamList parameters() const;
  /// Non-trainable state (power-iteration vectors).
  ParamList buffers() const;

 private:
  struct Layer {
    std::string name;
    Conv2d conv;
  };
  struct ResStage {
    std::size_t conv1, conv2, skip;
  };

  std::size_t add_layer(const std::string& name, Conv2d conv);
  const Conv2d& layer(std::size_t i) const { return layers_[i].conv; }
  Tensor res_stage(const Tensor& x, const ResStage& s) const;
  Tensor conv_trunk(const Tensor& img) const;
  Tensor wavelet_trunk(const Tensor& img) const;
  Tensor patch_trunk(const Tensor& img) const;

  DiscriminatorConfig config_;
  std::vector<Layer> layers_;

  // Conv discriminator.
  std::size_t conv_from_rgb_ = 0;
  std::vector<ResStage> conv_stages_;
  std::size_t conv_final_ = 0, conv_dense_ = 0, conv_logit_ = 0;
  // Wavelet discriminator.
  std::vector<std::size_t> from_wavelet_;
  std::vector<ResStage> wavelet_stages_;
  std::size_t wavelet_final_ = 0, wavelet_logit_ = 0;
  // Patch discriminator.
  std::size_t patch_from_rgb_ = 0;
  std::vector<std::size_t> patch_stages_;
  std::size_t patch_logit_ = 0;
};

}  // namespace styleswin
