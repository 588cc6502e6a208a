#pragma once

#include <span>
#include <vector>

#include "stepscore/tensor/tensor.hpp"

namespace stepscore::tensor {

// Arithmetic. Shape mismatches throw ShapeError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
Tensor affine(const Tensor& a, double s, double shift);  // s * a + shift
/// Adds a 1×n row to every row of an m×n tensor.
Tensor add_row(const Tensor& a, const Tensor& row);
/// Repeats a 1×n row m times.
Tensor broadcast_rows(const Tensor& row, Eigen::Index m);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// Pointwise nonlinearities.
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// Row softmax. With a mask, disallowed entries become exactly 0; a row with
/// nothing allowed throws ShapeError.
Tensor softmax_rows(const Tensor& a, const BoolMatrix* allowed = nullptr);

/// Per-row normalization to zero mean and unit variance, then gain * x + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Rows of `table` picked by `ids`.
Tensor embed(const Tensor& table, std::span<const int> ids);

/// Entries of a 1×R table picked by an index matrix; used for learned biases.
Tensor gather(const Tensor& table, const IndexMatrix& index);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Σ_i weight_i · (logsumexp(logits_i) − logits_i[target_i]) as a 1×1 tensor.
/// Rows with weight 0 are skipped.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const double> weights);

// Skeleton layout: a (T·J)×C tensor holds frame t, joint j in row t·J + j.

/// Spatial aggregation: every frame's J×C block is left-multiplied by `adjacency`.
Tensor graph_aggregate(const Tensor& x, const Matrix& adjacency);
/// Temporal im2col: row (t, j) gets [x(t−h, j), …, x(t+h, j)] with h = kernel/2
/// and zero padding, so a following matmul is a stride-1 temporal convolution.
Tensor temporal_unfold(const Tensor& x, Eigen::Index joints, Eigen::Index kernel);
/// Mean over each consecutive group of `group` rows: (T·J)×C → T×C.
Tensor group_mean_rows(const Tensor& x, Eigen::Index group);

}  // namespace stepscore::tensor
