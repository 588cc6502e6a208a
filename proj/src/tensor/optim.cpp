#include "stepscore/tensor/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stepscore::tensor {

double Schedule::lr(std::uint64_t step) const {
  if (step == 0) return 0.0;
  const double t = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  if (step == warmup) return peak;
  return peak * std::min(t / w, std::sqrt(w / t));
}

void adam_step(ParamStore& params, std::uint64_t t, const Schedule& schedule, const AdamConfig& config) {
  if (t < 1) throw std::invalid_argument("adam_step: step must be >= 1");
  const double lr = schedule.lr(t);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (auto& e : params.entries()) {
    if (params.is_frozen(e.name)) continue;
    const Matrix& g = e.param.grad();
    if (g.rows() != e.param.rows() || g.cols() != e.param.cols()) {
      throw ShapeError("adam_step: gradient of '" + e.name + "' has shape (" + std::to_string(g.rows()) + "x" +
                       std::to_string(g.cols()) + "), parameter is " + e.param.shape_string());
    }
    e.first_moment = config.beta1 * e.first_moment + (1.0 - config.beta1) * g;
    e.second_moment = config.beta2 * e.second_moment + (1.0 - config.beta2) * g.cwiseProduct(g);
    e.param.mutable_value().array() -=
        lr * (e.first_moment.array() / c1) / ((e.second_moment.array() / c2).sqrt() + config.eps);
  }
  params.step = t;
}

}  // namespace stepscore::tensor
