#include <algorithm>
#include <numeric>

#include "styleswin/ops.hpp"

namespace styleswin {

namespace {

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Visits every index of `shape` in row-major order, passing the linear index
// and the offset under `src_strides`.
template <class F>
void walk(const Shape& shape, const std::vector<std::int64_t>& src_strides, F f) {
  const auto n = shape_numel(shape);
  const auto rank = shape.size();
  if (rank == 0) return;
  std::vector<std::int64_t> idx(rank, 0);
  const auto inner = shape[rank - 1];
  const auto is = src_strides[rank - 1];
  std::int64_t off = 0;
  for (std::int64_t base = 0; base < n; base += inner) {
    for (std::int64_t j = 0; j < inner; ++j) f(base + j, off + j * is);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      off += src_strides[d];
      if (idx[d] < shape[d]) break;
      off -= src_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
}

std::int64_t norm_axis(std::int64_t axis, std::int64_t rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return axis;
}

std::vector<std::int64_t> norm_axes(std::vector<std::int64_t> axes, std::int64_t rank) {
  for (auto& a : axes) a = norm_axis(a, rank);
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  return axes;
}

}  // namespace

Tensor sum(const Tensor& x) {
  return sum(reshape(x, {x.numel()}), {0}, false);
}

Tensor sum(const Tensor& x, std::vector<std::int64_t> axes, bool keepdim) {
  const auto& xs = x.shape();
  axes = norm_axes(std::move(axes), x.rank());
  Shape kept = xs;
  for (auto a : axes) kept[a] = 1;
  // Map each input index to its output slot: reduced axes get stride 0.
  auto out_strides = contiguous_strides(kept);
  for (auto a : axes) out_strides[a] = 0;
  std::vector<double> out(static_cast<std::size_t>(shape_numel(kept)), 0.0);
  auto xd = x.data();
  walk(xs, out_strides, [&](std::int64_t i, std::int64_t o) { out[o] += xd[i]; });

  Shape out_shape;
  if (keepdim) {
    out_shape = kept;
  } else {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!std::binary_search(axes.begin(), axes.end(), static_cast<std::int64_t>(i))) {
        out_shape.push_back(xs[i]);
      }
    }
    if (out_shape.empty()) out_shape = {1};
  }
  return make_result("sum", out_shape, std::move(out), {x},
                     [xs, kept](const Tensor& g) -> std::vector<Tensor> {
                       return {broadcast_to(reshape(g, kept), xs)};
                     });
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean(const Tensor& x, std::vector<std::int64_t> axes, bool keepdim) {
  axes = norm_axes(std::move(axes), x.rank());
  std::int64_t count = 1;
  for (auto a : axes) count *= x.shape()[a];
  return mul_scalar(sum(x, axes, keepdim), 1.0 / static_cast<double>(count));
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  const auto& xs = x.shape();
  if (shape.size() > xs.size()) {
    throw ShapeError("sum_to: cannot reduce " + shape_str(xs) + " to " + shape_str(shape));
  }
  const auto lead = xs.size() - shape.size();
  std::vector<std::int64_t> axes;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i < lead) {
      axes.push_back(static_cast<std::int64_t>(i));
    } else if (shape[i - lead] == 1 && xs[i] != 1) {
      axes.push_back(static_cast<std::int64_t>(i));
    } else if (shape[i - lead] != xs[i]) {
      throw ShapeError("sum_to: cannot reduce " + shape_str(xs) + " to " + shape_str(shape));
    }
  }
  return reshape(sum(x, axes, true), shape);
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  const auto& xs = x.shape();
  if (broadcast_shapes(xs, shape) != shape) {
    throw ShapeError("cannot broadcast " + shape_str(xs) + " to " + shape_str(shape));
  }
  const auto rank = shape.size();
  std::vector<std::int64_t> src(rank, 0);
  auto xst = contiguous_strides(xs);
  const auto off = rank - xs.size();
  for (std::size_t i = 0; i < xs.size(); ++i) src[off + i] = xs[i] == 1 ? 0 : xst[i];
  std::vector<double> out(static_cast<std::size_t>(shape_numel(shape)));
  auto xd = x.data();
  walk(shape, src, [&](std::int64_t i, std::int64_t s) { out[i] = xd[s]; });
  return make_result("broadcast_to", shape, std::move(out), {x},
                     [xs](const Tensor& g) -> std::vector<Tensor> { return {sum_to(g, xs)}; });
}

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t infer = -1;
  std::int64_t known = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one inferred extent");
      infer = static_cast<std::int64_t>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[infer] = x.numel() / known;
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  if (shape == x.shape()) return x;
  auto d = x.data();
  return make_result("reshape", shape, std::vector<double>(d.begin(), d.end()), {x},
                     [xs = x.shape()](const Tensor& g) -> std::vector<Tensor> {
                       return {reshape(g, xs)};
                     });
}

Tensor permute(const Tensor& x, std::vector<std::int64_t> perm) {
  const auto rank = x.rank();
  if (static_cast<std::int64_t>(perm.size()) != rank) {
    throw ShapeError("permute: rank mismatch for " + shape_str(x.shape()));
  }
  for (auto& p : perm) p = norm_axis(p, rank);
  std::vector<std::int64_t> inverse(perm.size());
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (seen[perm[i]]) throw ShapeError("permute: repeated axis");
    seen[perm[i]] = true;
    inverse[perm[i]] = static_cast<std::int64_t>(i);
  }
  const auto& xs = x.shape();
  auto xst = contiguous_strides(xs);
  Shape out_shape(perm.size());
  std::vector<std::int64_t> src(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out_shape[i] = xs[perm[i]];
    src[i] = xst[perm[i]];
  }
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  auto xd = x.data();
  walk(out_shape, src, [&](std::int64_t i, std::int64_t s) { out[i] = xd[s]; });
  return make_result("permute", out_shape, std::move(out), {x},
                     [inverse](const Tensor& g) -> std::vector<Tensor> {
                       return {permute(g, inverse)};
                     });
}

Tensor transpose(const Tensor& x, std::int64_t axis0, std::int64_t axis1) {
  std::vector<std::int64_t> perm(static_cast<std::size_t>(x.rank()));
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[norm_axis(axis0, x.rank())], perm[norm_axis(axis1, x.rank())]);
  return permute(x, perm);
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const auto rank = parts[0].rank();
  axis = norm_axis(axis, rank);
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (std::int64_t d = 0; d < rank; ++d) {
      if (d != axis && p.shape()[d] != parts[0].shape()[d]) {
        throw ShapeError("concat: " + shape_str(p.shape()) + " vs " +
                         shape_str(parts[0].shape()) + " along axis " + std::to_string(axis));
      }
    }
    offsets.push_back(out_shape[axis]);
    out_shape[axis] += p.shape()[axis];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::int64_t d = axis + 1; d < rank; ++d) inner *= out_shape[d];
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  const auto row = out_shape[axis] * inner;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pd = parts[k].data();
    const auto len = parts[k].shape()[axis] * inner;
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + o * len, len, out.begin() + o * row + offsets[k] * inner);
    }
  }
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) extents.push_back(p.shape()[axis]);
  return make_result("concat", out_shape, std::move(out), parts,
                     [axis, offsets, extents](const Tensor& g) -> std::vector<Tensor> {
                       std::vector<Tensor> gs;
                       for (std::size_t k = 0; k < offsets.size(); ++k) {
                         gs.push_back(slice(g, axis, offsets[k], offsets[k] + extents[k]));
                       }
                       return gs;
                     });
}

Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t end) {
  axis = norm_axis(axis, x.rank());
  const auto full = x.shape()[axis];
  if (start < 0 || end > full || start >= end) {
    throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(end) +
                     ") out of range for axis " + std::to_string(axis) + " of " +
                     shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - start;
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::int64_t d = axis + 1; d < x.rank(); ++d) inner *= out_shape[d];
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  auto xd = x.data();
  const auto len = (end - start) * inner;
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(xd.begin() + o * full * inner + start * inner, len, out.begin() + o * len);
  }
  return make_result("slice", out_shape, std::move(out), {x},
                     [axis, start, full](const Tensor& g) -> std::vector<Tensor> {
                       return {pad_slice(g, axis, start, full)};
                     });
}

Tensor pad_slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t full) {
  axis = norm_axis(axis, x.rank());
  const auto len_axis = x.shape()[axis];
  if (start < 0 || start + len_axis > full) throw ShapeError("pad_slice out of range");
  Shape out_shape = x.shape();
  out_shape[axis] = full;
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::int64_t d = axis + 1; d < x.rank(); ++d) inner *= out_shape[d];
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)), 0.0);
  auto xd = x.data();
  const auto len = len_axis * inner;
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(xd.begin() + o * len, len, out.begin() + o * full * inner + start * inner);
  }
  return make_result("pad_slice", out_shape, std::move(out), {x},
                     [axis, start, len_axis](const Tensor& g) -> std::vector<Tensor> {
                       return {slice(g, axis, start, start + len_axis)};
                     });
}

Tensor roll2d(const Tensor& x, std::int64_t shift_h, std::int64_t shift_w) {
  if (x.rank() != 4) throw ShapeError("roll2d expects [B,H,W,C], got " + shape_str(x.shape()));
  const auto B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const auto sh = ((shift_h % H) + H) % H;
  const auto sw = ((shift_w % W) + W) % W;
  if (sh == 0 && sw == 0) return x;
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  auto xd = x.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t i = 0; i < H; ++i) {
      const auto oi = (i + sh) % H;
      for (std::int64_t j = 0; j < W; ++j) {
        const auto oj = (j + sw) % W;
        std::copy_n(xd.begin() + ((b * H + i) * W + j) * C, C,
                    out.begin() + ((b * H + oi) * W + oj) * C);
      }
    }
  }
  return make_result("roll2d", x.shape(), std::move(out), {x},
                     [sh, sw](const Tensor& g) -> std::vector<Tensor> {
                       return {roll2d(g, -sh, -sw)};
                     });
}

Tensor index_select(const Tensor& table, const std::vector<std::int64_t>& indices) {
  if (table.rank() != 2) throw ShapeError("index_select expects a 2-D table");
  const auto R = table.dim(0), C = table.dim(1);
  const auto n = static_cast<std::int64_t>(indices.size());
  std::vector<double> out(static_cast<std::size_t>(n * C));
  auto td = table.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = indices[i];
    if (r < 0 || r >= R) throw ShapeError("index_select: row index out of range");
    std::copy_n(td.begin() + r * C, C, out.begin() + i * C);
  }
  return make_result("index_select", {n, C}, std::move(out), {table},
                     [indices, R](const Tensor& g) -> std::vector<Tensor> {
                       return {index_add(g, indices, R)};
                     });
}

Tensor index_add(const Tensor& rows_in, const std::vector<std::int64_t>& indices,
                 std::int64_t rows) {
  const auto n = static_cast<std::int64_t>(indices.size());
  if (rows_in.rank() != 2 || rows_in.dim(0) != n) throw ShapeError("index_add: shape mismatch");
  const auto C = rows_in.dim(1);
  std::vector<double> out(static_cast<std::size_t>(rows * C), 0.0);
  auto rd = rows_in.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = indices[i];
    if (r < 0 || r >= rows) throw ShapeError("index_add: row index out of range");
    for (std::int64_t c = 0; c < C; ++c) out[r * C + c] += rd[i * C + c];
  }
  return make_result("index_add", {rows, C}, std::move(out), {rows_in},
                     [indices](const Tensor& g) -> std::vector<Tensor> {
                       return {index_select(g, indices)};
                     });
}

}  // namespace styleswin
