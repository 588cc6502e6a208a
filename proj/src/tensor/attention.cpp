#include "stepscore/tensor/attention.hpp"

#include <cmath>

namespace stepscore::tensor {

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const BoolMatrix* allowed,
                 const Tensor* bias) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: d_q " + std::to_string(q.cols()) + " != d_k " + std::to_string(k.cols()));
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("attention: keys " + k.shape_string() + " and values " + v.shape_string() +
                     " differ in length");
  }
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(k.cols())));
  if (bias != nullptr) scores = add(scores, *bias);
  return matmul(softmax_rows(scores, allowed), v);
}

BoolMatrix causal_mask(Eigen::Index n) {
  BoolMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = j <= i;
  return m;
}

}  // namespace stepscore::tensor
