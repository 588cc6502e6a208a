#pragma once

#include "stepscore/tensor/ops.hpp"

namespace stepscore::tensor {

/// out = softmax(q kᵀ / sqrt(d_k) + bias, restricted to `allowed`) · v
///
/// q is n×d, k is m×d, v is m×d_v; `allowed` and `bias` are n×m when given.
/// Every row of `allowed` needs at least one true entry.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const BoolMatrix* allowed = nullptr,
                 const Tensor* bias = nullptr);

/// Lower-triangular n×n mask (query i sees keys 0..i).
BoolMatrix causal_mask(Eigen::Index n);

}  // namespace stepscore::tensor
