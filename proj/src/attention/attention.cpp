#include "styleswin/attention.hpp"

#include <cmath>
#include <string>

namespace styleswin {

namespace {

void check_layout(const Tensor& x, const WindowGrid& grid, const char* op) {
  if (x.rank() != 4 || x.dim(1) != grid.height || x.dim(2) != grid.width) {
    throw ShapeError(std::string(op) + ": expected [B," + std::to_string(grid.height) + "," +
                     std::to_string(grid.width) + ",C], got " + shape_str(x.shape()));
  }
}

Tensor project_heads(const Tensor& tokens, const Linear& proj, HeadRange heads, std::int64_t d) {
  const Tensor w = slice(proj.weight, 1, heads.begin * d, heads.end * d);
  const Tensor b = slice(proj.bias, 0, heads.begin * d, heads.end * d);
  const std::int64_t n = tokens.dim(0);
  const std::int64_t t = tokens.dim(1);
  Tensor y = add(matmul(tokens, w), b);  // [N, T, h'·d]
  return permute(reshape(y, {n, t, heads.size(), d}), {0, 2, 1, 3});  // [N, h', T, d]
}

}  // namespace

WindowGrid WindowGrid::make(std::int64_t height, std::int64_t width, std::int64_t window,
                            bool shifted) {
  if (window <= 0 || height <= 0 || width <= 0) {
    throw ConfigError("WindowGrid: sizes must be positive (H=" + std::to_string(height) +
                      ", W=" + std::to_string(width) + ", window=" + std::to_string(window) + ")");
  }
  if (height % window != 0 || width % window != 0) {
    throw ConfigError("WindowGrid: window " + std::to_string(window) + " does not divide " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  return {height, width, window, shifted ? window / 2 : 0};
}

Tensor window_partition(const Tensor& x, const WindowGrid& grid) {
  check_layout(x, grid, "window_partition");
  const std::int64_t b = x.dim(0), c = x.dim(3), k = grid.window;
  const std::int64_t nh = grid.height / k, nw = grid.width / k;
  Tensor y = reshape(x, {b, nh, k, nw, k, c});
  y = permute(y, {0, 1, 3, 2, 4, 5});
  return reshape(y, {b * nh * nw, k, k, c});
}

Tensor window_reverse(const Tensor& windows, const WindowGrid& grid) {
  const std::int64_t k = grid.window;
  const std::int64_t per_image = grid.windows_per_image();
  if (windows.rank() != 4 || windows.dim(1) != k || windows.dim(2) != k ||
      windows.dim(0) % per_image != 0) {
    throw ShapeError("window_reverse: expected [B*" + std::to_string(per_image) + "," +
                     std::to_string(k) + "," + std::to_string(k) + ",C], got " +
                     shape_str(windows.shape()));
  }
  const std::int64_t b = windows.dim(0) / per_image, c = windows.dim(3);
  const std::int64_t nh = grid.height / k, nw = grid.width / k;
  Tensor y = reshape(windows, {b, nh, nw, k, k, c});
  y = permute(y, {0, 1, 3, 2, 4, 5});
  return reshape(y, {b, grid.height, grid.width, c});
}

Tensor cyclic_shift(const Tensor& x, std::int64_t s) {
  if (s == 0) return x;
  return roll2d(x, -s, -s);
}

Tensor cyclic_unshift(const Tensor& x, std::int64_t s) {
  if (s == 0) return x;
  return roll2d(x, s, s);
}

std::vector<std::int64_t> relative_position_index(std::int64_t window) {
  const std::int64_t t = window * window;
  const std::int64_t span = 2 * window - 1;
  std::vector<std::int64_t> index(static_cast<std::size_t>(t * t));
  for (std::int64_t q = 0; q < t; ++q) {
    const std::int64_t qy = q / window, qx = q % window;
    for (std::int64_t k = 0; k < t; ++k) {
      const std::int64_t dy = qy - k / window, dx = qx - k % window;
      index[static_cast<std::size_t>(q * t + k)] = (dy + window - 1) * span + (dx + window - 1);
    }
  }
  return index;
}

AttentionParams AttentionParams::init(std::int64_t dim, std::int64_t heads, std::int64_t window,
                                      Rng& rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("AttentionParams: head count " + std::to_string(heads) +
                      " does not divide channel dim " + std::to_string(dim));
  }
  if (window <= 0) throw ConfigError("AttentionParams: window must be positive");
  AttentionParams p;
  p.dim = dim;
  p.heads = heads;
  p.window = window;
  p.query = Linear::truncated(dim, dim, rng);
  p.key = Linear::truncated(dim, dim, rng);
  p.value = Linear::truncated(dim, dim, rng);
  p.output = Linear::truncated(dim, dim, rng);
  const std::int64_t span = 2 * window - 1;
  p.rpe_table = Tensor::zeros({span * span, heads});
  return p;
}

void AttentionParams::collect(const std::string& prefix, ParamList& out) const {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
  out.emplace_back(prefix + ".rpe_table", rpe_table);
}

Tensor window_attention(const Tensor& windows, const AttentionParams& params, bool use_rpe,
                        HeadRange heads) {
  const std::int64_t k = params.window;
  if (windows.rank() != 4 || windows.dim(1) != k || windows.dim(2) != k) {
    throw ShapeError("window_attention: expected [N," + std::to_string(k) + "," +
                     std::to_string(k) + ",C], got " + shape_str(windows.shape()));
  }
  if (windows.dim(3) != params.dim) {
    throw ConfigError("window_attention: channel dim " + std::to_string(windows.dim(3)) +
                      " does not match attention dim " + std::to_string(params.dim));
  }
  if (heads.begin < 0 || heads.end > params.heads || heads.size() <= 0) {
    throw ConfigError("window_attention: head range [" + std::to_string(heads.begin) + "," +
                      std::to_string(heads.end) + ") invalid for " +
                      std::to_string(params.heads) + " heads");
  }
  const std::int64_t n = windows.dim(0), t = k * k, d = params.head_dim();
  const Tensor tokens = reshape(windows, {n, t, params.dim});
  const Tensor q = project_heads(tokens, params.query, heads, d);
  const Tensor kk = project_heads(tokens, params.key, heads, d);
  const Tensor v = project_heads(tokens, params.value, heads, d);

  Tensor logits = mul_scalar(matmul_t(q, kk, false, true), 1.0 / std::sqrt(double(d)));
  if (use_rpe) {
    static thread_local std::int64_t cached_window = -1;
    static thread_local std::vector<std::int64_t> cached_index;
    if (cached_window != k) {
      cached_index = relative_position_index(k);
      cached_window = k;
    }
    Tensor bias = index_select(params.rpe_table, cached_index);  // [T·T, h]
    bias = slice(bias, 1, heads.begin, heads.end);
    bias = permute(reshape(bias, {t, t, heads.size()}), {2, 0, 1});  // [h', T, T]
    logits = add(logits, bias);
  }
  const Tensor attn = softmax(logits, -1);
  Tensor out = matmul(attn, v);                    // [N, h', T, d]
  out = permute(out, {0, 2, 1, 3});                // [N, T, h', d]
  return reshape(out, {n, k, k, heads.size() * d});
}

namespace {

Tensor branch(const Tensor& x, const AttentionParams& params, bool shifted, bool use_rpe,
              HeadRange heads) {
  const WindowGrid grid = WindowGrid::make(x.dim(1), x.dim(2), params.window, shifted);
  Tensor y = cyclic_shift(x, grid.shift);
  y = window_partition(y, grid);
  y = window_attention(y, params, use_rpe, heads);
  y = window_reverse(y, grid);
  return cyclic_unshift(y, grid.shift);
}

}  // namespace

Tensor double_attention(const Tensor& x, const AttentionParams& params, bool use_rpe) {
  const std::int64_t regular = regular_head_count(params.heads);
  std::vector<Tensor> parts;
  if (regular > 0) parts.push_back(branch(x, params, false, use_rpe, {0, regular}));
  parts.push_back(branch(x, params, true, use_rpe, {regular, params.heads}));
  const Tensor merged = parts.size() == 1 ? parts[0] : concat(parts, 3);
  return params.output(merged);
}

Tensor window_msa(const Tensor& x, const AttentionParams& params, bool shifted, bool use_rpe) {
  return params.output(branch(x, params, shifted, use_rpe, params.all_heads()));
}

TransformerBlockParams TransformerBlockParams::init(std::int64_t dim, std::int64_t heads,
                                                    std::int64_t window, double mlp_ratio,
                                                    Rng& rng) {
  const auto hidden = static_cast<std::int64_t>(std::llround(dim * mlp_ratio));
  if (hidden <= 0) throw ConfigError("TransformerBlockParams: mlp_ratio must be positive");
  TransformerBlockParams p;
  p.norm1 = LayerNormParams::identity(dim);
  p.attention = AttentionParams::init(dim, heads, window, rng);
  p.norm2 = LayerNormParams::identity(dim);
  p.mlp = FeedForward::init(dim, hidden, rng);
  return p;
}

void TransformerBlockParams::collect(const std::string& prefix, ParamList& out) const {
  norm1.collect(prefix + ".norm1", out);
  attention.collect(prefix + ".attn", out);
  norm2.collect(prefix + ".norm2", out);
  mlp.collect(prefix + ".mlp", out);
}

Tensor transformer_block(const Tensor& x, const TransformerBlockParams& params, AttentionKind kind,
                         bool use_rpe) {
  const Tensor h = params.norm1(x);
  Tensor a;
  switch (kind) {
    case AttentionKind::Regular: a = window_msa(h, params.attention, false, use_rpe); break;
    case AttentionKind::Shifted: a = window_msa(h, params.attention, true, use_rpe); break;
    case AttentionKind::Double: a = double_attention(h, params.attention, use_rpe); break;
  }
  const Tensor mid = add(a, x);
  return add(params.mlp(params.norm2(mid)), mid);
}

Tensor swin_block_pair(const Tensor& x, const TransformerBlockParams& a,
                       const TransformerBlockParams& b, bool use_rpe) {
  return transformer_block(transformer_block(x, a, AttentionKind::Regular, use_rpe), b,
                           AttentionKind::Shifted, use_rpe);
}

}  // namespace styleswin
