#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stepscore/motion/encoder.hpp"
#include "stepscore/tensor/optim.hpp"

namespace stepscore::motion {

struct BeatExample {
  Matrix frames;  // (T·J)×3
  int root = 0;
  const MotionGraph* graph = nullptr;
  std::vector<int> beats;  // per-frame 0/1
};

struct StyleExample {
  Matrix frames;
  int root = 0;
  const MotionGraph* graph = nullptr;
  int genre = 0;
};

/// Beat logits of root-centred frames through the movement branch and head.
Tensor beat_logits(const Stgcn& stgcn, const BeatHead& head, const Matrix& frames, const MotionGraph& graph, int root);

/// One Adam step on the batch-mean beat loss. Returns that loss.
double train_beat_step(const Stgcn& stgcn, const BeatHead& head, ParamStore& store, std::span<const BeatExample> batch,
                       std::uint64_t t, const tensor::Schedule& schedule, const tensor::AdamConfig& adam = {},
                       double beat_weight = 1.5);

/// One Adam step on the batch-mean genre cross-entropy. Returns that loss.
double train_style_step(const StyleBranch& style, ParamStore& store, std::span<const StyleExample> batch,
                        std::uint64_t t, const tensor::Schedule& schedule, const tensor::AdamConfig& adam = {});

int predict_genre(const StyleBranch& style, const Matrix& frames, const MotionGraph& graph, int root);

}  // namespace stepscore::motion
