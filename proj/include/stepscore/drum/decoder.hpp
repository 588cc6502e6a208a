#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "stepscore/codec/tokens.hpp"
#include "stepscore/motion/encoder.hpp"
#include "stepscore/nn/layers.hpp"
#include "stepscore/tensor/optim.hpp"

namespace stepscore::drum {

using codec::IdSequence;
using codec::Vocab;
using tensor::BoolMatrix;
using tensor::Matrix;
using tensor::ParamStore;
using tensor::Rng;
using tensor::Tensor;

inline constexpr int kFields = codec::kFieldCount;
using FieldSizes = std::array<int, kFields>;
using FieldLogits = std::array<Tensor, kFields>;

FieldSizes field_sizes(const Vocab& vocab);
/// w_f = |V_f| / Σ|V|.
std::array<double, kFields> field_weights(const FieldSizes& sizes);

struct DrumConfig {
  int d_model = 512;
  int heads = 8;
  int blocks = 6;
  int encoder_blocks = 6;
  int hidden = 1024;
  int max_length = 2048;
  int relative_clip = 128;
  double frames_per_slot = 0.625;  // 30 ticks at 480 tpq, 120 bpm, 20 fps
};

/// Onset frame of every token: BOM at its measure start, Position, Chord and
/// Pitch at their slot; BOS at 0 and EOS at the last onset.
std::vector<double> token_frames(const IdSequence& seq, const Vocab& vocab, double frames_per_slot);

/// Causal, except that a Pitch never sees an earlier Pitch of its own
/// pos_group. Notes of one slot are then an unordered set to everything after.
BoolMatrix decoder_mask(const IdSequence& seq, const std::vector<bool>& is_pitch);

/// Masked self-attention over drum tokens, VGM cross-attention over the
/// encoded dance context, feed-forward; pre-norm residuals around each.
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(ParamStore& store, const std::string& name, const DrumConfig& config, Rng& rng);
  Tensor operator()(const Tensor& h, const BoolMatrix& mask, std::span<const int> groups, const Tensor& context) const;

  nn::LayerNorm norm_msa;
  nn::MultiHeadAttention msa;
  nn::RelativeBias relative;
  nn::LayerNorm norm_vgm;
  nn::MultiHeadAttention vgm;  // queries from drum tokens, keys and values from Z
  nn::LayerNorm norm_ff;
  nn::FeedForward ff;
};

class DrumDecoder {
 public:
  DrumDecoder() = default;
  DrumDecoder(ParamStore& store, const std::string& name, const Vocab& vocab, const DrumConfig& config, Rng& rng);

  /// Self-attention encoder over Z (plus a frame position code).
  Tensor encode_context(const Tensor& z) const;
  /// Next-token logits per field at every prefix position.
  FieldLogits forward(const IdSequence& prefix, std::span<const double> frames, const Tensor& context) const;
  FieldLogits operator()(const IdSequence& prefix, const Tensor& z) const;

  DrumConfig config;
  FieldSizes sizes{};
  std::vector<bool> is_pitch;  // per event id
  std::array<Tensor, kFields> embeddings;
  std::vector<nn::EncoderLayer> encoder;
  nn::LayerNorm encoder_norm;
  std::vector<DecoderBlock> blocks;
  nn::LayerNorm final_norm;
  std::array<nn::Linear, kFields> heads;
  Vocab vocab;
};

/// Σ_f w_f · mean cross-entropy of field f over positions 0..n−2, with the
/// target of position i being token i+1.
Tensor next_token_loss(const FieldLogits& logits, const IdSequence& seq, const std::array<double, kFields>& weights);

/// Fraction of positions whose next token is predicted exactly (all four
/// fields by argmax).
double next_token_accuracy(const FieldLogits& logits, const IdSequence& seq);

struct Sampler {
  double temperature = 1.0;
  int top_k = 16;
};

/// Draws an index among `allowed` from softmax(logits / temperature) cut to the
/// top k; temperature 0 is argmax. Throws when nothing is allowed.
int sample(const Eigen::Ref<const Eigen::RowVectorXd>& logits, const std::vector<bool>& allowed, const Sampler& sampler,
           Rng& rng);

struct GenerateOptions {
  Sampler sampler;
  int max_measures = 0;  // 0: no limit besides the maximum length
  int drum_track = 0;
};

struct Generated {
  IdSequence ids;  // with BOS, and EOS when the model emitted one
  std::vector<codec::TokenQuad> tokens;
};

/// Grammar-constrained autoregressive decoding from BOS.
Generated generate(const DrumDecoder& decoder, const Tensor& z, const GenerateOptions& options, Rng& rng);

/// Dance context encoder and drum decoder sharing one parameter store.
struct DrumModel {
  DrumModel() = default;
  DrumModel(ParamStore& store, const Vocab& vocab, const motion::ContextConfig& context_config,
            const DrumConfig& drum_config, Rng& rng);

  motion::ContextEncoder context;
  DrumDecoder decoder;
};

struct DrumExample {
  Matrix frames;  // (T·J)×3
  int root = 0;
  const motion::MotionGraph* graph = nullptr;
  std::vector<int> beats;  // per-frame 0/1
  IdSequence target;       // BOS … EOS
};

struct DrumTrainOptions {
  double beat_class_weight = 1.5;
  double beat_loss_scale = 1.0;
};

struct DrumLosses {
  double token = 0.0;
  double beat = 0.0;
  double total = 0.0;
};

/// Teacher-forced step: Z is fused from the annotated beats, the beat head is
/// trained on the same annotation, and both losses are summed and averaged
/// over the batch before one Adam update.
DrumLosses train_step(const DrumModel& model, ParamStore& store, std::span<const DrumExample> batch, std::uint64_t t,
                      const tensor::Schedule& schedule, const tensor::AdamConfig& adam = {},
                      const DrumTrainOptions& options = {});

}  // namespace stepscore::drum
