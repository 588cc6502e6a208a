#include "stepscore/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace stepscore::tensor {

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::span<Tensor> leaves, double eps,
                                std::size_t max_entries_per_leaf, double floor) {
  for (auto& leaf : leaves) leaf.zero_grad();
  backward(loss_fn());

  GradCheckResult result;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    const Matrix analytic =
        leaf.grad().size() == 0 ? Matrix::Zero(leaf.rows(), leaf.cols()) : Matrix(leaf.grad());
    const auto total = static_cast<std::size_t>(leaf.value().size());
    const std::size_t stride = std::max<std::size_t>(1, total / std::max<std::size_t>(1, max_entries_per_leaf));
    for (std::size_t i = 0; i < total; i += stride) {
      double& x = leaf.mutable_value().data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = loss_fn().item();
      x = saved - eps;
      const double down = loss_fn().item();
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.checked;
      if (err > result.max_rel_error || result.worst.empty()) {
        if (err >= result.max_rel_error) {
          result.max_rel_error = err;
          result.worst = std::to_string(li) + "#" + std::to_string(i);
        }
      }
    }
  }
  return result;
}

}  // namespace stepscore::tensor
