#pragma once

#include <string>
#include <vector>

#include "stepscore/motion/skeleton.hpp"
#include "stepscore/nn/layers.hpp"

namespace stepscore::motion {

using tensor::ParamStore;
using tensor::Tensor;

/// One spatial graph convolution (uni-labeling): A·X·W + b per frame.
Tensor graph_conv(const Tensor& x, const Matrix& adjacency, const nn::Linear& weights);

/// Spatial conv → ReLU → temporal conv (stride 1, zero padded) → layer norm,
/// plus a residual path (1×1 projection when the width changes), then ReLU.
class StBlock {
 public:
  StBlock() = default;
  StBlock(ParamStore& store, const std::string& name, int in, int out, int kernel, Rng& rng);
  Tensor operator()(const Tensor& x, const MotionGraph& graph) const;

  int kernel = 9;
  nn::Linear spatial;
  nn::Linear temporal;
  nn::Linear residual;  // undefined weight when in == out
  nn::LayerNorm norm;
};

struct StgcnConfig {
  std::vector<int> channels{64, 64, 64, 128, 128, 128, 256, 256, 256};
  int out = 512;
  int kernel = 9;
};

/// Movement branch: stacked StBlocks, a per-joint projection to `out`
/// channels, then the mean over joints, giving Z_m with T rows.
class Stgcn {
 public:
  Stgcn() = default;
  Stgcn(ParamStore& store, const std::string& name, const StgcnConfig& config, Rng& rng);
  /// `x` is (T·J)×3 in the skeleton layout.
  Tensor operator()(const Tensor& x, const MotionGraph& graph) const;

  std::vector<StBlock> blocks;
  nn::Linear projection;
};

struct BeatHeadConfig {
  int layers = 2;
  int heads = 8;
  int hidden = 1024;
};

/// Self-attention over frames, then a 2-way (non-beat, beat) classifier per frame.
class BeatHead {
 public:
  BeatHead() = default;
  BeatHead(ParamStore& store, const std::string& name, int width, const BeatHeadConfig& config, Rng& rng);
  Tensor operator()(const Tensor& zm) const;

  std::vector<nn::EncoderLayer> layers;
  nn::LayerNorm norm;
  nn::Linear classify;
};

/// 1 where logit(beat) > logit(non-beat).
std::vector<int> threshold_beats(const Matrix& logits);
std::vector<int> beat_indicator(const std::vector<int>& beat_frames, int frames);

/// Mean class-weighted cross-entropy; the beat class weight is `beat_weight`,
/// the other class has weight 1.
Tensor beat_loss(const Tensor& logits, const std::vector<int>& indicator, double beat_weight);

struct FrameScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
/// Exact frame-wise scores; F1 is 1 when both sequences are all zeros.
FrameScores frame_scores(const std::vector<int>& predicted, const std::vector<int>& truth);

struct StyleConfig {
  int blocks = 4;
  int channels = 64;
  int kernel = 9;
  int gru_hidden = 64;
  int embedding = 32;
  int mlp_hidden = 64;
  int genres = 6;
};

struct StyleOutput {
  Tensor embedding;  // 1×embedding
  Tensor logits;     // 1×genres
};

/// Style branch: root-centering, motion_only, GCN blocks, joint pooling, two GRU layers,
/// last hidden state → embedding → MLP genre logits.
class StyleBranch {
 public:
  StyleBranch() = default;
  StyleBranch(ParamStore& store, const std::string& name, const StyleConfig& config, Rng& rng);
  StyleOutput operator()(const Matrix& frames, const MotionGraph& graph, int root) const;

  std::vector<StBlock> blocks;
  nn::Gru gru1;
  nn::Gru gru2;
  nn::Linear embed;
  nn::Linear hidden;
  nn::Linear classify;
};

/// Z = [zb(t), u(zs)] · W + b for every frame t, where u(zs) is the style
/// embedding centred and scaled to unit norm.
class Fusion {
 public:
  Fusion() = default;
  Fusion(ParamStore& store, const std::string& name, int style_width, int width, Rng& rng);
  Tensor operator()(const std::vector<int>& zb, const Tensor& zs) const;

  nn::Linear map;
};

struct ContextConfig {
  StgcnConfig stgcn;
  BeatHeadConfig beat;
  StyleConfig style;
  int d_model = 512;
};

struct ContextOutput {
  Tensor zm;
  Tensor beat_logits;
  std::vector<int> zb;
  StyleOutput style;
  Tensor z;
};

/// The whole conditioning path from skeleton to Z. Movement and beat
/// parameters live under "<name>.", the style branch under "style.".
class ContextEncoder {
 public:
  ContextEncoder() = default;
  ContextEncoder(ParamStore& store, const std::string& name, const ContextConfig& config, Rng& rng);

  /// With `teacher_beats`, Z is built from those frames instead of the
  /// thresholded beat head.
  ContextOutput operator()(const Skeleton& skeleton, const MotionGraph& graph,
                           const std::vector<int>* teacher_beats = nullptr) const;
  ContextOutput operator()(const Matrix& frames, const MotionGraph& graph, int root,
                           const std::vector<int>* teacher_beats = nullptr) const;

  ContextConfig config;
  Stgcn stgcn;
  BeatHead beat;
  StyleBranch style;
  Fusion fusion;
};

}  // namespace stepscore::motion
