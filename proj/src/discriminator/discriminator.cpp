#include "styleswin/discriminator.hpp"

#include <algorithm>
#include <cmath>

namespace styleswin {

namespace {

const Tensor& haar_matrix() {
  static const Tensor m = Tensor::from({4, 4}, {0.5, 0.5, 0.5, 0.5,     //
                                                0.5, 0.5, -0.5, -0.5,   //
                                                0.5, -0.5, 0.5, -0.5,   //
                                                0.5, -0.5, -0.5, 0.5});
  return m;
}

void check_even(const Tensor& x, const char* op) {
  if (x.rank() != 4 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    throw ContractError(std::string(op) + ": expected [B,H,W,C] with even H and W, got " +
                        shape_str(x.shape()));
  }
}

Tensor unit(const Tensor& x, double eps = 1e-12) {
  const double n = std::sqrt(sum(square(x)).item());
  return mul_scalar(x, 1.0 / std::max(n, eps));
}

Tensor as_matrix(const Tensor& weight) {
  return reshape(weight, {-1, weight.dim(weight.rank() - 1)});
}

}  // namespace

Tensor haar_dwt_packed(const Tensor& x) {
  check_even(x, "haar_dwt");
  const std::int64_t b = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2, c = x.dim(3);
  Tensor y = permute(reshape(x, {b, h, 2, w, 2, c}), {0, 1, 3, 5, 2, 4});  // [B,h,w,C,2,2]
  y = matmul(reshape(y, {b, h, w, c, 4}), haar_matrix());
  return reshape(permute(y, {0, 1, 2, 4, 3}), {b, h, w, 4 * c});
}

Tensor haar_idwt_packed(const Tensor& packed) {
  if (packed.rank() != 4 || packed.dim(3) % 4 != 0) {
    throw ContractError("haar_idwt: expected [B,h,w,4C], got " + shape_str(packed.shape()));
  }
  const std::int64_t b = packed.dim(0), h = packed.dim(1), w = packed.dim(2);
  const std::int64_t c = packed.dim(3) / 4;
  Tensor y = permute(reshape(packed, {b, h, w, 4, c}), {0, 1, 2, 4, 3});  // [B,h,w,C,4]
  y = reshape(matmul(y, haar_matrix()), {b, h, w, c, 2, 2});
  return reshape(permute(y, {0, 1, 4, 2, 5, 3}), {b, 2 * h, 2 * w, c});
}

HaarCoeffs haar_dwt(const Tensor& x) {
  const Tensor p = haar_dwt_packed(x);
  const std::int64_t c = x.dim(3);
  return {slice(p, 3, 0, c), slice(p, 3, c, 2 * c), slice(p, 3, 2 * c, 3 * c),
          slice(p, 3, 3 * c, 4 * c)};
}

Tensor haar_idwt(const HaarCoeffs& bands) {
  return haar_idwt_packed(concat({bands.ll, bands.lh, bands.hl, bands.hh}, 3));
}

SpectralNorm SpectralNorm::init(std::int64_t in, std::int64_t out, Rng& rng) {
  return {unit(randn({out}, rng)), unit(randn({in}, rng))};
}

void SpectralNorm::power_iteration(const Tensor& weight) {
  NoGradGuard guard;
  const Tensor m = as_matrix(weight.detach());
  const Tensor nv = unit(reshape(matmul(m, reshape(u, {-1, 1})), {-1}));
  const Tensor nu = unit(reshape(matmul_t(m, reshape(nv, {-1, 1}), true, false), {-1}));
  auto assign = [](Tensor& dst, const Tensor& src) {
    auto d = dst.mutable_data();
    auto s = src.data();
    std::copy(s.begin(), s.end(), d.begin());
  };
  assign(v, nv);
  assign(u, nu);
}

Tensor SpectralNorm::sigma(const Tensor& weight) const {
  const Tensor m = as_matrix(weight);
  return sum(mul(matmul(reshape(v, {1, -1}), m), reshape(u, {1, -1})));
}

Tensor SpectralNorm::normalize(const Tensor& weight, double eps) const {
  const Tensor s = sigma(weight);
  if (!(s.item() > eps)) return mul_scalar(weight, 1.0 / eps);
  return div(weight, s);
}

Tensor spectral_normalize(const Tensor& weight, SpectralNorm& state) {
  state.power_iteration(weight);
  return state.normalize(weight);
}

Tensor tv_loss(const Tensor& img) {
  if (img.rank() != 4) throw ShapeError("tv_loss: expected [B,H,W,C], got " + shape_str(img.shape()));
  const std::int64_t h = img.dim(1), w = img.dim(2);
  Tensor total = Tensor::zeros({});
  if (h > 1) total = add(total, mean(abs(sub(slice(img, 1, 1, h), slice(img, 1, 0, h - 1)))));
  if (w > 1) total = add(total, mean(abs(sub(slice(img, 2, 1, w), slice(img, 2, 0, w - 1)))));
  return total;
}

DiscriminatorKind parse_discriminator_kind(const std::string& name) {
  if (name == "conv") return DiscriminatorKind::Conv;
  if (name == "wavelet") return DiscriminatorKind::Wavelet;
  if (name == "patch") return DiscriminatorKind::Patch;
  throw ConfigError("unknown discriminator kind '" + name + "' (expected conv, wavelet or patch)");
}

std::string to_string(DiscriminatorKind kind) {
  switch (kind) {
    case DiscriminatorKind::Conv: return "conv";
    case DiscriminatorKind::Wavelet: return "wavelet";
    case DiscriminatorKind::Patch: return "patch";
  }
  return "unknown";
}

std::int64_t DiscriminatorConfig::channels_at(std::int64_t level) const {
  if (level < 0 || level >= static_cast<std::int64_t>(channels.size())) {
    throw ConfigError("discriminator: no channel width configured for level " +
                      std::to_string(level) + " (resolution " +
                      std::to_string(image_size >> level) + ")");
  }
  return channels[static_cast<std::size_t>(level)];
}

void DiscriminatorConfig::validate() const {
  if (image_size < 8 || (image_size & (image_size - 1)) != 0) {
    throw ConfigError("discriminator: image size must be a power of two >= 8, got " +
                      std::to_string(image_size));
  }
  std::int64_t levels = 0;
  while ((image_size >> levels) > 4) ++levels;
  if ((image_size >> levels) != 4) {
    throw ConfigError("discriminator: image size " + std::to_string(image_size) +
                      " does not halve to 4x4");
  }
  for (auto c : channels) {
    if (c <= 0) throw ConfigError("discriminator: channel widths must be positive");
  }
  if (kind == DiscriminatorKind::Patch) {
    if (patch_stages <= 0 || (image_size >> patch_stages) < 1 ||
        ((image_size >> patch_stages) << patch_stages) != image_size) {
      throw ConfigError("discriminator: invalid patch_stages " + std::to_string(patch_stages));
    }
    channels_at(patch_stages);
  } else {
    channels_at(levels);
  }
}

Conv2d Conv2d::init(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                    bool bias, bool spectral_norm, Rng& rng) {
  Conv2d c;
  const std::int64_t fan_in = kernel * kernel * in;
  c.weight = randn({fan_in, out}, rng, std::sqrt(2.0 / (1.0 + 0.2 * 0.2) / double(fan_in)));
  if (bias) c.bias = Tensor::zeros({out});
  c.kernel = kernel;
  c.stride = stride;
  c.padding = kernel / 2;
  c.use_sn = spectral_norm;
  if (spectral_norm) c.sn = SpectralNorm::init(fan_in, out, rng);
  return c;
}

Tensor Conv2d::effective_weight() const { return use_sn ? sn.normalize(weight) : weight; }

Tensor Conv2d::operator()(const Tensor& x) const {
  const Tensor w = effective_weight();
  Tensor cols = kernel == 1 && stride == 1 ? x : unfold(x, kernel, stride, padding);
  Tensor y = matmul(cols, w);
  return bias.defined() ? add(y, bias) : y;
}

std::size_t Discriminator::add_layer(const std::string& name, Conv2d conv) {
  layers_.push_back({name, std::move(conv)});
  return layers_.size() - 1;
}

Discriminator::Discriminator(DiscriminatorConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const bool sn = config_.spectral_norm;
  const std::int64_t s = config_.image_size;
  std::int64_t levels = 0;
  while ((s >> levels) > 4) ++levels;

  auto make_stage = [&](const std::string& name, std::int64_t in, std::int64_t out) {
    ResStage st;
    st.conv1 = add_layer(name + ".conv1", Conv2d::init(in, in, 3, 1, true, sn, rng));
    st.conv2 = add_layer(name + ".conv2", Conv2d::init(in, out, 3, 2, true, sn, rng));
    st.skip = add_layer(name + ".skip", Conv2d::init(in, out, 1, 1, false, sn, rng));
    return st;
  };

  const bool want_conv = config_.kind == DiscriminatorKind::Conv ||
                         (config_.kind == DiscriminatorKind::Wavelet && config_.combine_spatial);
  if (want_conv) {
    conv_from_rgb_ = add_layer("conv.from_rgb", Conv2d::init(3, config_.channels_at(0), 1, 1, true, sn, rng));
    for (std::int64_t i = 0; i < levels; ++i) {
      conv_stages_.push_back(make_stage("conv.stage" + std::to_string(i), config_.channels_at(i),
                                        config_.channels_at(i + 1)));
    }
    const std::int64_t c = config_.channels_at(levels);
    conv_final_ = add_layer("conv.final", Conv2d::init(c, c, 3, 1, true, sn, rng));
    conv_dense_ = add_layer("conv.dense", Conv2d::init(16 * c, c, 1, 1, true, sn, rng));
    conv_logit_ = add_layer("conv.logit", Conv2d::init(c, 1, 1, 1, true, sn, rng));
  }
  if (config_.kind == DiscriminatorKind::Wavelet) {
    // Level l >= 1 holds features at resolution S / 2^l.
    for (std::int64_t l = 1; l <= levels; ++l) {
      from_wavelet_.push_back(add_layer("wavelet.from_wavelet" + std::to_string(l),
                                        Conv2d::init(12, config_.channels_at(l), 1, 1, true, sn, rng)));
    }
    for (std::int64_t l = 1; l < levels; ++l) {
      wavelet_stages_.push_back(make_stage("wavelet.stage" + std::to_string(l),
                                           config_.channels_at(l), config_.channels_at(l + 1)));
    }
    const std::int64_t c = config_.channels_at(levels);
    wavelet_final_ = add_layer("wavelet.final", Conv2d::init(c, c, 3, 1, true, sn, rng));
    wavelet_logit_ = add_layer("wavelet.logit", Conv2d::init(c, 1, 1, 1, true, sn, rng));
  }
  if (config_.kind == DiscriminatorKind::Patch) {
    patch_from_rgb_ = add_layer("patch.from_rgb", Conv2d::init(3, config_.channels_at(0), 1, 1, true, sn, rng));
    for (std::int64_t i = 0; i < config_.patch_stages; ++i) {
      patch_stages_.push_back(add_layer("patch.stage" + std::to_string(i),
                                        Conv2d::init(config_.channels_at(i), config_.channels_at(i + 1),
                                                     3, 2, true, sn, rng)));
    }
    patch_logit_ = add_layer("patch.logit",
                             Conv2d::init(config_.channels_at(config_.patch_stages), 1, 1, 1, true, sn, rng));
  }
}

Tensor Discriminator::res_stage(const Tensor& x, const ResStage& s) const {
  Tensor main = leaky_relu(layer(s.conv1)(x));
  main = leaky_relu(layer(s.conv2)(main));
  const Tensor skip = layer(s.skip)(avg_pool2x(x));
  return mul_scalar(add(main, skip), 1.0 / std::sqrt(2.0));
}

Tensor Discriminator::conv_trunk(const Tensor& img) const {
  Tensor h = leaky_relu(layer(conv_from_rgb_)(img));
  for (const auto& st : conv_stages_) h = res_stage(h, st);
  h = leaky_relu(layer(conv_final_)(h));
  h = reshape(h, {h.dim(0), 1, 1, -1});
  h = leaky_relu(layer(conv_dense_)(h));
  return reshape(layer(conv_logit_)(h), {img.dim(0)});
}

Tensor Discriminator::wavelet_trunk(const Tensor& img) const {
  Tensor bands = haar_dwt_packed(img);
  Tensor h = leaky_relu(layer(from_wavelet_[0])(bands));
  Tensor image = mul_scalar(slice(bands, 3, 0, 3), 0.5);
  for (std::size_t i = 0; i < wavelet_stages_.size(); ++i) {
    h = res_stage(h, wavelet_stages_[i]);
    bands = haar_dwt_packed(image);
    h = add(h, leaky_relu(layer(from_wavelet_[i + 1])(bands)));
    image = mul_scalar(slice(bands, 3, 0, 3), 0.5);
  }
  h = leaky_relu(layer(wavelet_final_)(h));
  h = mean(h, {1, 2});
  return reshape(layer(wavelet_logit_)(h), {img.dim(0)});
}

Tensor Discriminator::patch_trunk(const Tensor& img) const {
  Tensor h = leaky_relu(layer(patch_from_rgb_)(img));
  for (auto i : patch_stages_) h = leaky_relu(layer(i)(h));
  const Tensor logits = layer(patch_logit_)(h);
  return reshape(logits, {logits.dim(0), logits.dim(1), logits.dim(2)});
}

Tensor Discriminator::forward(const Tensor& img) const {
  const std::int64_t s = config_.image_size;
  if (img.rank() != 4 || img.dim(1) != s || img.dim(2) != s || img.dim(3) != 3) {
    throw ShapeError("discriminator: expected [B," + std::to_string(s) + "," +
                     std::to_string(s) + ",3], got " + shape_str(img.shape()));
  }
  switch (config_.kind) {
    case DiscriminatorKind::Conv: return conv_trunk(img);
    case DiscriminatorKind::Patch: return patch_trunk(img);
    case DiscriminatorKind::Wavelet: {
      const Tensor logits = wavelet_trunk(img);
      return config_.combine_spatial ? add(logits, conv_trunk(img)) : logits;
    }
  }
  throw ContractError("discriminator: unknown kind");
}

void Discriminator::power_iteration() {
  for (auto& l : layers_) {
    if (l.conv.use_sn) l.conv.sn.power_iteration(l.conv.weight);
  }
}

ParamList Discriminator::parameters() const {
  ParamList out;
  for (const auto& l : layers_) {
    out.emplace_back(l.name + ".weight", l.conv.weight);
    if (l.conv.bias.defined()) out.emplace_back(l.name + ".bias", l.conv.bias);
  }
  return out;
}

ParamList Discriminator::buffers() const {
  ParamList out;
  for (const auto& l : layers_) {
    if (!l.conv.use_sn) continue;
    out.emplace_back(l.name + ".sn_u", l.conv.sn.u);
    out.emplace_back(l.name + ".sn_v", l.conv.sn.v);
  }
  return out;
}

}  // namespace styleswin
