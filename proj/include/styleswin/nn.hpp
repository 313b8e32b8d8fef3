#pragma once

#include <string>
#include <utility>
#include <vector>

#include "styleswin/ops.hpp"
#include "styleswin/random.hpp"

namespace styleswin {

/// Ordered (name, tensor) list; the canonical way parameters are exposed to
/// optimizers, EMA and checkpoints.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

std::vector<Tensor> tensors_of(const ParamList& params);
std::int64_t parameter_count(const ParamList& params);
/// Copies values name-by-name; names and shapes must match exactly.
void copy_values(const ParamList& dst, const ParamList& src);

/// y = x @ weight + bias over the last axis; weight is [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear truncated(std::int64_t in, std::int64_t out, Rng& rng, double stddev = 0.02);
  static Linear zeros(std::int64_t in, std::int64_t out);

  Tensor operator()(const Tensor& x) const;
  std::int64_t in_features() const { return weight.dim(0); }
  std::int64_t out_features() const { return weight.dim(1); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams identity(std::int64_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Two-layer GELU feed-forward network used inside transformer blocks.
struct FeedForward {
  Linear fc1;
  Linear fc2;

  static FeedForward init(std::int64_t dim, std::int64_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace styleswin
