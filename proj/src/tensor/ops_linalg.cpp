#include <Eigen/Core>

#include "styleswin/ops.hpp"

namespace styleswin {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct MatDims {
  std::int64_t rows;  // stored rows
  std::int64_t cols;  // stored cols
  Shape batch;
};

MatDims split(const Tensor& t) {
  if (t.rank() < 2) throw ShapeError("matmul operand must have rank >= 2, got " + shape_str(t.shape()));
  const auto& s = t.shape();
  return {s[s.size() - 2], s[s.size() - 1], Shape(s.begin(), s.end() - 2)};
}

// Offset (in matrices) of each broadcast batch index into an operand's batch.
std::vector<std::int64_t> batch_offsets(const Shape& operand, const Shape& out) {
  const auto n = shape_numel(out);
  std::vector<std::int64_t> offs(static_cast<std::size_t>(n), 0);
  if (out.empty()) return offs;
  const auto rank = out.size();
  std::vector<std::int64_t> strides(rank, 0);
  std::int64_t st = 1;
  const auto lead = rank - operand.size();
  for (std::size_t i = operand.size(); i-- > 0;) {
    strides[lead + i] = operand[i] == 1 ? 0 : st;
    st *= operand[i];
  }
  std::vector<std::int64_t> idx(rank, 0);
  for (std::int64_t k = 0; k < n; ++k) {
    std::int64_t o = 0;
    for (std::size_t d = 0; d < rank; ++d) o += idx[d] * strides[d];
    offs[k] = o;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out[d]) break;
      idx[d] = 0;
    }
  }
  return offs;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_t(a, b, false, false); }

Tensor matmul_t(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const auto da = split(a);
  const auto db = split(b);
  const auto M = ta ? da.cols : da.rows;
  const auto K = ta ? da.rows : da.cols;
  const auto Kb = tb ? db.cols : db.rows;
  const auto N = tb ? db.rows : db.cols;
  if (K != Kb) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                     (ta ? "^T" : "") + " @ " + shape_str(b.shape()) + (tb ? "^T" : ""));
  }
  Shape batch;
  try {
    batch = broadcast_shapes(da.batch, db.batch);
  } catch (const ShapeError&) {
    throw ShapeError("matmul batch dimensions not broadcastable: " + shape_str(a.shape()) +
                     " @ " + shape_str(b.shape()));
  }
  Shape out_shape = batch;
  out_shape.push_back(M);
  out_shape.push_back(N);
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)), 0.0);

  const auto ad = a.data();
  const auto bd = b.data();
  const auto a_size = da.rows * da.cols;
  const auto b_size = db.rows * db.cols;

  if (db.batch.empty() && !ta && shape_numel(batch) > 1 && da.batch == batch) {
    // Fold all of a's batch into the row dimension: one GEMM.
    const auto rows = shape_numel(batch) * M;
    ConstMap A(ad.data(), rows, K);
    ConstMap B(bd.data(), db.rows, db.cols);
    MutMap C(out.data(), rows, N);
    if (tb) C.noalias() = A * B.transpose();
    else C.noalias() = A * B;
  } else {
    const auto ao = batch_offsets(da.batch, batch);
    const auto bo = batch_offsets(db.batch, batch);
    for (std::size_t k = 0; k < ao.size(); ++k) {
      ConstMap A(ad.data() + ao[k] * a_size, da.rows, da.cols);
      ConstMap B(bd.data() + bo[k] * b_size, db.rows, db.cols);
      MutMap C(out.data() + static_cast<std::int64_t>(k) * M * N, M, N);
      if (ta && tb) C.noalias() = A.transpose() * B.transpose();
      else if (ta) C.noalias() = A.transpose() * B;
      else if (tb) C.noalias() = A * B.transpose();
      else C.noalias() = A * B;
    }
  }

  return make_result("matmul", out_shape, std::move(out), {a, b},
                     [a, b, ta, tb](const Tensor& g) -> std::vector<Tensor> {
                       Tensor ga, gb;
                       if (a.requires_grad()) {
                         ga = ta ? matmul_t(b, g, tb, true) : matmul_t(g, b, false, !tb);
                         ga = sum_to(ga, a.shape());
                       }
                       if (b.requires_grad()) {
                         gb = tb ? matmul_t(g, a, true, ta) : matmul_t(a, g, !ta, false);
                         gb = sum_to(gb, b.shape());
                       }
                       return {ga, gb};
                     });
}

}  // namespace styleswin
