#pragma once

#include <functional>
#include <span>
#include <string>

#include "stepscore/tensor/tensor.hpp"

namespace stepscore::tensor {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "leaf#index" of the worst entry
  std::size_t checked = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Compares backward() against central differences for the given leaves.
///
/// The error of one entry is |analytic − numeric| / max(|analytic|, |numeric|, floor);
/// the floor keeps entries whose true gradient is ~0 from dividing by noise.
/// At most `max_entries_per_leaf` entries per leaf are probed, spread evenly.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::span<Tensor> leaves,
                                double eps = 1e-5, std::size_t max_entries_per_leaf = 48, double floor = 1e-6);

}  // namespace stepscore::tensor
