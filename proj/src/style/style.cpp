#include "styleswin/style.hpp"

#include <cmath>
#include <cctype>

namespace styleswin {

namespace {

struct VariantName {
  StyleVariant variant;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {StyleVariant::AdaIN, "adain"},
    {StyleVariant::AdaLN, "adaln"},
    {StyleVariant::AdaBN, "adabn"},
    {StyleVariant::AdaRMSNorm, "adarmsnorm"},
    {StyleVariant::ModulatedMLP, "modulated_mlp"},
    {StyleVariant::CrossAttention, "cross_attention"},
    {StyleVariant::None, "none"},
};

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

void check_style(const Tensor& x, const Tensor& gamma, const char* op) {
  if (x.rank() != 4) throw ShapeError(std::string(op) + ": expected [B,H,W,C], got " + shape_str(x.shape()));
  if (gamma.rank() != 2 || gamma.dim(0) != x.dim(0) || gamma.dim(1) != x.dim(3)) {
    throw ShapeError(std::string(op) + ": style " + shape_str(gamma.shape()) +
                     " does not match features " + shape_str(x.shape()));
  }
}

Tensor per_channel(const Tensor& s) { return reshape(s, {s.dim(0), 1, 1, s.dim(1)}); }

Tensor modulate(const Tensor& xhat, const Tensor& gamma, const Tensor& beta) {
  Tensor y = mul(xhat, per_channel(gamma));
  return beta.defined() ? add(y, per_channel(beta)) : y;
}

/// Reshapes [B, n] so it broadcasts against x [B, ..., n].
Tensor batch_broadcastable(const Tensor& s, const Tensor& x) {
  Shape shape(static_cast<std::size_t>(x.rank()), 1);
  shape.front() = s.dim(0);
  shape.back() = s.dim(1);
  return reshape(s, shape);
}

}  // namespace

StyleVariant parse_style_variant(const std::string& name) {
  const std::string key = lower(name);
  for (const auto& v : kVariantNames) {
    if (key == v.name) return v.variant;
  }
  throw ConfigError("unknown style variant '" + name +
                    "' (expected adain, adaln, adabn, adarmsnorm, modulated_mlp, "
                    "cross_attention or none)");
}

std::string to_string(StyleVariant variant) {
  for (const auto& v : kVariantNames) {
    if (v.variant == variant) return v.name;
  }
  return "unknown";
}

bool is_ada_norm(StyleVariant variant) {
  return variant == StyleVariant::AdaIN || variant == StyleVariant::AdaLN ||
         variant == StyleVariant::AdaBN || variant == StyleVariant::AdaRMSNorm;
}

std::optional<std::string> style_config_warning(StyleVariant variant, std::int64_t batch) {
  if (variant == StyleVariant::AdaBN && batch <= 1) {
    return "AdaBN with batch size " + std::to_string(batch) +
           ": batch statistics degenerate to per-sample statistics and training is unlikely "
           "to converge";
  }
  return std::nullopt;
}

MappingNetwork MappingNetwork::init(std::int64_t z_dim, std::int64_t w_dim, std::int64_t depth,
                                    Rng& rng) {
  if (depth <= 0) throw ConfigError("MappingNetwork: depth must be positive");
  MappingNetwork m;
  for (std::int64_t i = 0; i < depth; ++i) {
    const std::int64_t in = i == 0 ? z_dim : w_dim;
    // Variance-preserving under leaky ReLU(0.2).
    const double stddev = std::sqrt(2.0 / (1.0 + 0.2 * 0.2) / double(in));
    m.layers.push_back({randn({in, w_dim}, rng, stddev), Tensor::zeros({w_dim})});
  }
  return m;
}

Tensor MappingNetwork::operator()(const Tensor& z) const {
  if (z.rank() != 2 || z.dim(1) != z_dim()) {
    throw ShapeError("mapping: expected [B," + std::to_string(z_dim()) + "], got " +
                     shape_str(z.shape()));
  }
  Tensor h = z;
  for (const auto& layer : layers) h = leaky_relu(layer(h), 0.2);
  return h;
}

void MappingNetwork::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + "." + std::to_string(i), out);
}

StyleAffine StyleAffine::init(std::int64_t w_dim, std::int64_t channels, bool with_shift,
                              Rng& rng) {
  const std::int64_t out = with_shift ? 2 * channels : channels;
  StyleAffine a{Linear::truncated(w_dim, out, rng), channels, with_shift};
  auto bias = a.proj.bias.mutable_data();
  for (std::int64_t c = 0; c < channels; ++c) bias[static_cast<std::size_t>(c)] = 1.0;
  return a;
}

ScaleShift StyleAffine::operator()(const Tensor& w) const {
  const Tensor y = proj(w);
  if (!with_shift) return {y, Tensor()};
  return {slice(y, 1, 0, channels), slice(y, 1, channels, 2 * channels)};
}

void StyleAffine::collect(const std::string& prefix, ParamList& out) const {
  proj.collect(prefix, out);
}

Tensor adain(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_style(x, gamma, "adain");
  const InstanceStats st = instance_stats(x, eps);
  const Tensor xhat = div(sub(x, per_channel(st.mean)), per_channel(st.std));
  return modulate(xhat, gamma, beta);
}

Tensor adaln(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_style(x, gamma, "adaln");
  return modulate(normalize(x, {3}, eps), gamma, beta);
}

Tensor adabn(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_style(x, gamma, "adabn");
  return modulate(normalize(x, {0, 1, 2}, eps), gamma, beta);
}

Tensor ada_rmsnorm(const Tensor& x, const Tensor& gamma, double eps) {
  check_style(x, gamma, "ada_rmsnorm");
  const Tensor rms = sqrt(add_scalar(mean(square(x), {3}, true), eps));
  return mul(div(x, rms), per_channel(gamma));
}

Tensor ada_norm(StyleVariant variant, const Tensor& x, const ScaleShift& style) {
  switch (variant) {
    case StyleVariant::AdaIN: return adain(x, style.gamma, style.beta);
    case StyleVariant::AdaLN: return adaln(x, style.gamma, style.beta);
    case StyleVariant::AdaBN: return adabn(x, style.gamma, style.beta);
    case StyleVariant::AdaRMSNorm: return ada_rmsnorm(x, style.gamma);
    default: break;
  }
  throw ContractError("ada_norm: variant " + to_string(variant) + " is not a normalization");
}

Tensor modulated_linear(const Tensor& x, const Tensor& s, const Linear& layer, double eps) {
  if (s.rank() != 2 || s.dim(0) != x.dim(0) || s.dim(1) != layer.in_features() ||
      x.dim(x.rank() - 1) != layer.in_features()) {
    throw ShapeError("modulated_linear: input " + shape_str(x.shape()) + ", scales " +
                     shape_str(s.shape()) + ", weight " + shape_str(layer.weight.shape()));
  }
  const Tensor y = matmul(mul(x, batch_broadcastable(s, x)), layer.weight);
  const Tensor demod = pow(add_scalar(matmul(square(s), square(layer.weight)), eps), -0.5);
  return add(mul(y, batch_broadcastable(demod, y)), layer.bias);
}

ModulatedFeedForward ModulatedFeedForward::init(std::int64_t dim, std::int64_t hidden,
                                                std::int64_t w_dim, Rng& rng) {
  ModulatedFeedForward m;
  m.ffn = FeedForward::init(dim, hidden, rng);
  m.scale1 = StyleAffine::init(w_dim, dim, false, rng);
  m.scale2 = StyleAffine::init(w_dim, hidden, false, rng);
  return m;
}

Tensor ModulatedFeedForward::operator()(const Tensor& x, const Tensor& w) const {
  const Tensor h = gelu(modulated_linear(x, scale1(w).gamma, ffn.fc1));
  return modulated_linear(h, scale2(w).gamma, ffn.fc2);
}

void ModulatedFeedForward::collect(const std::string& prefix, ParamList& out) const {
  ffn.collect(prefix, out);
  scale1.collect(prefix + ".style1", out);
  scale2.collect(prefix + ".style2", out);
}

CrossAttentionParams CrossAttentionParams::init(std::int64_t dim, std::int64_t heads,
                                                std::int64_t tokens, std::int64_t w_dim,
                                                Rng& rng) {
  if (tokens <= 0) throw ConfigError("cross attention: style token count must be positive");
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("cross attention: head count " + std::to_string(heads) +
                      " does not divide channel dim " + std::to_string(dim));
  }
  CrossAttentionParams p;
  p.dim = dim;
  p.heads = heads;
  p.tokens = tokens;
  p.style_tokens = Linear::truncated(w_dim, tokens * dim, rng);
  p.query = Linear::truncated(dim, dim, rng);
  p.key = Linear::truncated(dim, dim, rng);
  p.value = Linear::truncated(dim, dim, rng);
  p.output = Linear::truncated(dim, dim, rng);
  return p;
}

void CrossAttentionParams::collect(const std::string& prefix, ParamList& out) const {
  style_tokens.collect(prefix + ".style_tokens", out);
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
}

Tensor cross_attention_style(const Tensor& x, const Tensor& w, const CrossAttentionParams& p) {
  if (x.rank() != 4 || x.dim(3) != p.dim) {
    throw ShapeError("cross_attention_style: expected [B,H,W," + std::to_string(p.dim) +
                     "], got " + shape_str(x.shape()));
  }
  const std::int64_t b = x.dim(0), t = x.dim(1) * x.dim(2), h = p.heads, d = p.dim / p.heads;
  const Tensor tokens = reshape(x, {b, t, p.dim});
  const Tensor style = reshape(p.style_tokens(w), {b, p.tokens, p.dim});
  auto heads_of = [&](const Tensor& y, std::int64_t n) {
    return permute(reshape(y, {b, n, h, d}), {0, 2, 1, 3});
  };
  const Tensor q = heads_of(p.query(tokens), t);
  const Tensor k = heads_of(p.key(style), p.tokens);
  const Tensor v = heads_of(p.value(style), p.tokens);
  const Tensor attn = softmax(mul_scalar(matmul_t(q, k, false, true), 1.0 / std::sqrt(double(d))), -1);
  Tensor out = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {b, t, p.dim});
  out = reshape(p.output(out), x.shape());
  return add(x, out);
}

}  // namespace styleswin
