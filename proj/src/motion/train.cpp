#include "stepscore/motion/train.hpp"

#include <stdexcept>

#include "stepscore/tensor/ops.hpp"

namespace stepscore::motion {

using tensor::adam_step;
using tensor::backward;

Tensor beat_logits(const Stgcn& stgcn, const BeatHead& head, const Matrix& frames, const MotionGraph& graph, int root) {
  return head(stgcn(Tensor::constant(root_center(frames, graph.joints, root)), graph));
}

double train_beat_step(const Stgcn& stgcn, const BeatHead& head, ParamStore& store, std::span<const BeatExample> batch,
                       std::uint64_t t, const tensor::Schedule& schedule, const tensor::AdamConfig& adam,
                       double beat_weight) {
  if (batch.empty()) throw std::invalid_argument("beat train step: empty batch");
  store.zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  Tensor total;
  for (const auto& ex : batch) {
    const Tensor loss = scale(beat_loss(beat_logits(stgcn, head, ex.frames, *ex.graph, ex.root), ex.beats, beat_weight), inv);
    total = total.defined() ? add(total, loss) : loss;
  }
  backward(total, store);
  adam_step(store, t, schedule, adam);
  return total.item();
}

double train_style_step(const StyleBranch& style, ParamStore& store, std::span<const StyleExample> batch,
                        std::uint64_t t, const tensor::Schedule& schedule, const tensor::AdamConfig& adam) {
  if (batch.empty()) throw std::invalid_argument("style train step: empty batch");
  store.zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  const std::vector<double> unit{1.0};
  Tensor total;
  for (const auto& ex : batch) {
    const std::vector<int> target{ex.genre};
    const Tensor loss = scale(cross_entropy(style(ex.frames, *ex.graph, ex.root).logits, target, unit), inv);
    total = total.defined() ? add(total, loss) : loss;
  }
  backward(total, store);
  adam_step(store, t, schedule, adam);
  return total.item();
}

int predict_genre(const StyleBranch& style, const Matrix& frames, const MotionGraph& graph, int root) {
  Eigen::Index best = 0;
  style(frames, graph, root).logits.value().row(0).maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace stepscore::motion
