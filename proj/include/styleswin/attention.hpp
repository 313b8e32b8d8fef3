#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "styleswin/nn.hpp"

namespace styleswin {

struct WindowGrid {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t window = 0;
  std::int64_t shift = 0;

  /// Validates divisibility; shifted grids use shift = window / 2.
  static WindowGrid make(std::int64_t height, std::int64_t width, std::int64_t window,
                         bool shifted = false);
  std::int64_t windows_per_image() const { return (height / window) * (width / window); }
  std::int64_t tokens() const { return window * window; }
};

Tensor window_partition(const Tensor& x, const WindowGrid& grid);
Tensor window_reverse(const Tensor& windows, const WindowGrid& grid);

/// Toroidal roll by (-s, -s); cyclic_unshift is the exact inverse.
Tensor cyclic_shift(const Tensor& x, std::int64_t s);
Tensor cyclic_unshift(const Tensor& x, std::int64_t s);

/// Relative-position index of each (query, key) token pair within a window,
/// row-major over [κ², κ²], into a table of (2κ-1)² rows.
std::vector<std::int64_t> relative_position_index(std::int64_t window);

struct HeadRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t size() const { return end - begin; }
};

/// Per-head projections are column blocks of the [C, C] query/key/value
/// matrices: head i owns columns [i·d, (i+1)·d) with d = C/h.
struct AttentionParams {
  std::int64_t dim = 0;
  std::int64_t heads = 0;
  std::int64_t window = 0;
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  Tensor rpe_table;  // [(2κ-1)², h]

  static AttentionParams init(std::int64_t dim, std::int64_t heads, std::int64_t window, Rng& rng);
  std::int64_t head_dim() const { return dim / heads; }
  HeadRange all_heads() const { return {0, heads}; }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Scaled dot-product attention inside each window for the selected heads.
/// windows: [N, κ, κ, C] -> [N, κ, κ, |heads|·d]; W^O is not applied.
Tensor window_attention(const Tensor& windows, const AttentionParams& params, bool use_rpe,
                        HeadRange heads);

/// Number of heads on the regular partition in double attention.
inline std::int64_t regular_head_count(std::int64_t heads) { return heads / 2; }

/// Heads [0, ⌊h/2⌋) attend in regular windows, the rest in windows shifted by
/// ⌊κ/2⌋; the concatenation is projected by W^O.
Tensor double_attention(const Tensor& x, const AttentionParams& params, bool use_rpe);

/// All heads on one partition (regular or shifted), then W^O.
Tensor window_msa(const Tensor& x, const AttentionParams& params, bool shifted, bool use_rpe);

/// Pre-norm residual transformer block: x̂ = A(LN(x)) + x; y = MLP(LN(x̂)) + x̂.
struct TransformerBlockParams {
  LayerNormParams norm1;
  AttentionParams attention;
  LayerNormParams norm2;
  FeedForward mlp;

  static TransformerBlockParams init(std::int64_t dim, std::int64_t heads, std::int64_t window,
                                     double mlp_ratio, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

enum class AttentionKind { Regular, Shifted, Double };

Tensor transformer_block(const Tensor& x, const TransformerBlockParams& params, AttentionKind kind,
                         bool use_rpe);

/// Consecutive regular-window then shifted-window blocks.
Tensor swin_block_pair(const Tensor& x, const TransformerBlockParams& a,
                       const TransformerBlockParams& b, bool use_rpe = true);

}  // namespace styleswin
