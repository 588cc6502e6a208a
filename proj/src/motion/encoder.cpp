#include "stepscore/motion/encoder.hpp"

#include "stepscore/tensor/ops.hpp"

namespace stepscore::motion {

using namespace tensor;

Tensor graph_conv(const Tensor& x, const Matrix& adjacency, const nn::Linear& weights) {
  return weights(graph_aggregate(x, adjacency));
}

StBlock::StBlock(ParamStore& store, const std::string& name, int in, int out, int kernel_, Rng& rng)
    : kernel(kernel_),
      spatial(store, name + ".spatial", in, out, rng),
      temporal(store, name + ".temporal", kernel_ * out, out, rng),
      norm(store, name + ".norm", out) {
  if (in != out) residual = nn::Linear(store, name + ".residual", in, out, rng, false);
}

Tensor StBlock::operator()(const Tensor& x, const MotionGraph& graph) const {
  if (x.rows() % graph.joints != 0) {
    throw ShapeError("st-gcn: " + std::to_string(x.rows()) + " rows is not a multiple of " +
                     std::to_string(graph.joints) + " joints");
  }
  const Tensor s = relu(graph_conv(x, graph.adjacency, spatial));
  const Tensor t = norm(temporal(temporal_unfold(s, graph.joints, kernel)));
  const Tensor skip = residual.weight.defined() ? residual(x) : x;
  return relu(add(t, skip));
}

Stgcn::Stgcn(ParamStore& store, const std::string& name, const StgcnConfig& config, Rng& rng) {
  int in = 3;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    blocks.emplace_back(store, name + ".block" + std::to_string(i), in, config.channels[i], config.kernel, rng);
    in = config.channels[i];
  }
  projection = nn::Linear(store, name + ".projection", in, config.out, rng);
}

Tensor Stgcn::operator()(const Tensor& x, const MotionGraph& graph) const {
  if (x.cols() != 3) throw ShapeError("st-gcn: expected 3 coordinates per joint, got " + x.shape_string());
  Tensor h = x;
  for (const auto& block : blocks) h = block(h, graph);
  return group_mean_rows(projection(h), graph.joints);
}

BeatHead::BeatHead(ParamStore& store, const std::string& name, int width, const BeatHeadConfig& config, Rng& rng)
    : norm(store, name + ".norm", width), classify(store, name + ".classify", width, 2, rng) {
  for (int i = 0; i < config.layers; ++i)
    layers.emplace_back(store, name + ".layer" + std::to_string(i), width, config.heads, config.hidden, rng);
}

Tensor BeatHead::operator()(const Tensor& zm) const {
  Tensor h = zm;
  for (const auto& layer : layers) h = layer(h);
  return classify(norm(h));
}

std::vector<int> threshold_beats(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) out[static_cast<std::size_t>(t)] = logits(t, 1) > logits(t, 0);
  return out;
}

std::vector<int> beat_indicator(const std::vector<int>& beat_frames, int frames) {
  std::vector<int> out(static_cast<std::size_t>(frames), 0);
  for (int b : beat_frames)
    if (b >= 0 && b < frames) out[static_cast<std::size_t>(b)] = 1;
  return out;
}

Tensor beat_loss(const Tensor& logits, const std::vector<int>& indicator, double beat_weight) {
  if (static_cast<Eigen::Index>(indicator.size()) != logits.rows())
    throw ShapeError("beat loss: " + std::to_string(indicator.size()) + " labels for " + logits.shape_string());
  std::vector<double> weights(indicator.size());
  for (std::size_t i = 0; i < indicator.size(); ++i) weights[i] = indicator[i] ? beat_weight : 1.0;
  return scale(cross_entropy(logits, indicator, weights), 1.0 / static_cast<double>(indicator.size()));
}

FrameScores frame_scores(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw MotionError("frame scores: length mismatch");
  double tp = 0;
  double fp = 0;
  double fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    tp += predicted[i] && truth[i];
    fp += predicted[i] && !truth[i];
    fn += !predicted[i] && truth[i];
  }
  FrameScores s;
  if (tp + fp + fn == 0) return {1.0, 1.0, 1.0};
  s.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  s.f1 = 2 * tp / (2 * tp + fp + fn);
  return s;
}

StyleBranch::StyleBranch(ParamStore& store, const std::string& name, const StyleConfig& config, Rng& rng) {
  int in = 3;
  for (int i = 0; i < config.blocks; ++i) {
    blocks.emplace_back(store, name + ".block" + std::to_string(i), in, config.channels, config.kernel, rng);
    in = config.channels;
  }
  gru1 = nn::Gru(store, name + ".gru1", in, config.gru_hidden, rng);
  gru2 = nn::Gru(store, name + ".gru2", config.gru_hidden, config.gru_hidden, rng);
  embed = nn::Linear(store, name + ".embed", config.gru_hidden, config.embedding, rng);
  hidden = nn::Linear(store, name + ".mlp", config.embedding, config.mlp_hidden, rng);
  classify = nn::Linear(store, name + ".classify", config.mlp_hidden, config.genres, rng);
}

StyleOutput StyleBranch::operator()(const Matrix& frames, const MotionGraph& graph, int root) const {
  Tensor h = Tensor::constant(motion_only(root_center(frames, graph.joints, root), graph.joints));
  for (const auto& block : blocks) h = block(h, graph);
  const Tensor states = gru2(gru1(group_mean_rows(h, graph.joints)));
  StyleOutput out;
  out.embedding = embed(slice_rows(states, states.rows() - 1, 1));
  out.logits = classify(relu(hidden(out.embedding)));
  return out;
}

Fusion::Fusion(ParamStore& store, const std::string& name, int style_width, int width, Rng& rng)
    : map(store, name, 1 + style_width, width, rng) {}

Tensor Fusion::operator()(const std::vector<int>& zb, const Tensor& zs) const {
  Matrix beats(static_cast<Eigen::Index>(zb.size()), 1);
  for (std::size_t t = 0; t < zb.size(); ++t) beats(static_cast<Eigen::Index>(t), 0) = zb[t];
  // a pretrained style embedding is large next to the 0/1 beat column;
  // bringing it to unit norm keeps the beat visible through the decoder
  const auto width = zs.value().cols();
  const Tensor unit = scale(layer_norm(zs, Tensor::constant(Matrix::Ones(1, width)), Tensor::constant(Matrix::Zero(1, width))),
                            1.0 / std::sqrt(static_cast<double>(width)));
  const std::vector<Tensor> parts{Tensor::constant(beats), broadcast_rows(unit, beats.rows())};
  return map(concat_cols(parts));
}

ContextEncoder::ContextEncoder(ParamStore& store, const std::string& name, const ContextConfig& config_, Rng& rng)
    : config(config_),
      stgcn(store, name + ".stgcn", config_.stgcn, rng),
      beat(store, name + ".beat", config_.stgcn.out, config_.beat, rng),
      style(store, "style", config_.style, rng),
      fusion(store, name + ".fuse", config_.style.embedding, config_.d_model, rng) {}

ContextOutput ContextEncoder::operator()(const Skeleton& skeleton, const MotionGraph& graph,
                                         const std::vector<int>* teacher_beats) const {
  return (*this)(skeleton.frames, graph, skeleton.root, teacher_beats);
}

ContextOutput ContextEncoder::operator()(const Matrix& frames, const MotionGraph& graph, int root,
                                         const std::vector<int>* teacher_beats) const {
  ContextOutput out;
  const Matrix centered = root_center(frames, graph.joints, root);
  out.zm = stgcn(Tensor::constant(centered), graph);
  out.beat_logits = beat(out.zm);
  out.zb = teacher_beats ? *teacher_beats : threshold_beats(out.beat_logits.value());
  out.style = style(frames, graph, root);
  out.z = fusion(out.zb, out.style.embedding);
  return out;
}

}  // namespace stepscore::motion
