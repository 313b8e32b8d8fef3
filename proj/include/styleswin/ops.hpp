#pragma once

#include <cstdint>
#include <vector>

#include "styleswin/tensor.hpp"

// Differentiable primitives. Every op records a backward closure built from
// other differentiable ops unless noted, so gradients can themselves be
// differentiated (R1 needs this through the discriminator).
namespace styleswin {

// Broadcasting elementwise arithmetic (numpy rules, trailing-aligned).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator/(const Tensor& a, double s) { return mul_scalar(a, 1.0 / s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Unary maps.
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor pow(const Tensor& x, double p);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
/// Exact (erf) GELU. Its derivative node is first-order only.
Tensor gelu(const Tensor& x);

// Reductions.
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::vector<std::int64_t> axes, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::vector<std::int64_t> axes, bool keepdim = false);
/// Sums broadcast dimensions away so the result has `shape`.
Tensor sum_to(const Tensor& x, const Shape& shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Shape broadcast_shapes(const Shape& a, const Shape& b);

// Layout.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::vector<std::int64_t> perm);
Tensor transpose(const Tensor& x, std::int64_t axis0, std::int64_t axis1);
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);
Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t end);
/// Adjoint of slice: places x at [start, start+len) along axis of a zero tensor.
Tensor pad_slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t full);
/// Toroidal roll of a [B,H,W,C] tensor: out[b,(i+sh)%H,(j+sw)%W,c] = x[b,i,j,c].
Tensor roll2d(const Tensor& x, std::int64_t shift_h, std::int64_t shift_w);

// Linear algebra. Batch dims broadcast; optional transposes of the last two
// axes avoid materializing transposed copies in backward.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_t(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b);

// Gather rows of a 2-D table: out[i, :] = table[indices[i], :].
Tensor index_select(const Tensor& table, const std::vector<std::int64_t>& indices);
/// Adjoint of index_select: scatter-add rows into a zero table of `rows` rows.
Tensor index_add(const Tensor& rows_in, const std::vector<std::int64_t>& indices,
                 std::int64_t rows);

// Neural-net kernels.
Tensor softmax(const Tensor& x, std::int64_t axis);
/// (x - mean) / sqrt(var + eps) over `axes` (population variance). The
/// backward is a fused first-order kernel.
Tensor normalize(const Tensor& x, std::vector<std::int64_t> axes, double eps = 1e-5);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Per-sample, per-channel spatial statistics of [B,H,W,C]; std is
/// sqrt(population variance + eps).
struct InstanceStats {
  Tensor mean;
  Tensor std;
};
InstanceStats instance_stats(const Tensor& x, double eps = 1e-5);

/// Align-corners-false bilinear 2x upsampling of [B,H,W,C] with edge clamping.
Tensor upsample_bilinear2x(const Tensor& x);
/// Transpose (adjoint) of upsample_bilinear2x: [B,2H,2W,C] -> [B,H,W,C].
Tensor upsample_bilinear2x_adjoint(const Tensor& y);

/// im2col for [B,H,W,C] with zero padding: -> [B,Ho,Wo,k*k*C], patch layout
/// (ky, kx, c).
Tensor unfold(const Tensor& x, std::int64_t kernel, std::int64_t stride, std::int64_t padding);
/// Adjoint of unfold.
Tensor fold(const Tensor& cols, const Shape& input_shape, std::int64_t kernel,
            std::int64_t stride, std::int64_t padding);
/// 2x2 average pooling of [B,H,W,C].
Tensor avg_pool2x(const Tensor& x);

}  // namespace styleswin
