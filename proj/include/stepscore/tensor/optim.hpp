#pragma once

#include <cstdint>

#include "stepscore/tensor/params.hpp"

namespace stepscore::tensor {

/// Warmup then inverse-square-root decay:
/// lr(t) = peak · min(t / warmup, sqrt(warmup / t)).
struct Schedule {
  double peak = 0.0007;
  std::uint64_t warmup = 6000;

  double lr(std::uint64_t step) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.9;  // deliberately low; 0.999 is the common choice
  double eps = 1e-9;
};

/// One bias-corrected Adam update at step t ≥ 1 using the gradients held by
/// the parameters. Frozen parameters are left alone. Sets params.step = t.
void adam_step(ParamStore& params, std::uint64_t t, const Schedule& schedule, const AdamConfig& config = {});

}  // namespace stepscore::tensor
