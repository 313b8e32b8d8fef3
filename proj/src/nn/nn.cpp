#include "styleswin/nn.hpp"

#include <algorithm>

namespace styleswin {

std::vector<Tensor> tensors_of(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

std::int64_t parameter_count(const ParamList& params) {
  std::int64_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

void copy_values(const ParamList& dst, const ParamList& src) {
  if (dst.size() != src.size()) {
    throw ShapeError("copy_values: " + std::to_string(dst.size()) + " vs " +
                     std::to_string(src.size()) + " parameters");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].first != src[i].first || dst[i].second.shape() != src[i].second.shape()) {
      throw ShapeError("copy_values: mismatch at " + dst[i].first + " " +
                       shape_str(dst[i].second.shape()) + " vs " + src[i].first + " " +
                       shape_str(src[i].second.shape()));
    }
    Tensor target = dst[i].second;
    auto d = target.mutable_data();
    auto s = src[i].second.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

Linear Linear::truncated(std::int64_t in, std::int64_t out, Rng& rng, double stddev) {
  return {truncated_normal({in, out}, rng, stddev), Tensor::zeros({out})};
}

Linear Linear::zeros(std::int64_t in, std::int64_t out) {
  return {Tensor::zeros({in, out}), Tensor::zeros({out})};
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

LayerNormParams LayerNormParams::identity(std::int64_t dim) {
  return {Tensor::ones({dim}), Tensor::zeros({dim})};
}

void LayerNormParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".bias", bias);
}

FeedForward FeedForward::init(std::int64_t dim, std::int64_t hidden, Rng& rng) {
  return {Linear::truncated(dim, hidden, rng), Linear::truncated(hidden, dim, rng)};
}

void FeedForward::collect(const std::string& prefix, ParamList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

}  // namespace styleswin
