#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stepscore/codec/quantize.hpp"
#include "stepscore/codec/tokens.hpp"
#include "stepscore/drum/decoder.hpp"
#include "stepscore/nn/layers.hpp"
#include "stepscore/tensor/optim.hpp"

namespace stepscore::bert {

using codec::Field;
using codec::IdSequence;
using codec::QuantizedClip;
using codec::Vocab;
using drum::FieldLogits;
using drum::FieldSizes;
using drum::kFields;
using tensor::ParamStore;
using tensor::Rng;
using tensor::Tensor;

struct BertConfig {
  int hidden = 768;
  int layers = 12;
  int heads = 12;
  int ff = 3072;
  int max_length = 4096;
  int relative_clip = 128;
};

/// What happened to one selected position.
enum class Replacement { Mask, Random, Keep };

/// Model input with per-field masks. `target` holds the original ids; only
/// positions flagged in `masked[f]` contribute to the loss of field f.
struct MaskedBatch {
  IdSequence input;
  IdSequence target;
  std::array<std::vector<bool>, kFields> masked;
  Field field = Field::Event;  // the field chosen by measure_mask
  std::vector<Replacement> replacements;
  bool single_measure = false;  // selection could not be spread over measures

  std::size_t masked_count() const;
};

/// Measure index of every position (−1 before the first BOM).
std::vector<int> measure_of(const IdSequence& seq, const Vocab& vocab);

/// Picks one field uniformly; selects round(rate · n) of that field's
/// candidate tokens (at least 2, spread over at least two measures when the
/// sequence has them); each selected token becomes MASK with probability
/// 0.8, a random in-field token with 0.1, and stays unchanged otherwise.
/// Event candidates are all content tokens; the other fields only exist on
/// Pitch tokens.
MaskedBatch measure_mask(const IdSequence& seq, const Vocab& vocab, Rng& rng, double rate = 0.15);

/// Bidirectional transformer over quad sequences.
class BertGen {
 public:
  BertGen() = default;
  BertGen(ParamStore& store, const std::string& name, const Vocab& vocab, const BertConfig& config, Rng& rng);

  FieldLogits operator()(const IdSequence& input) const;

  BertConfig config;
  FieldSizes sizes{};
  std::array<Tensor, kFields> embeddings;
  std::vector<nn::EncoderLayer> layers;
  std::vector<nn::RelativeBias> relative;
  nn::LayerNorm final_norm;
  std::array<nn::Linear, kFields> dense;  // the dense layer on top of each hidden vector
  std::array<nn::Linear, kFields> heads;
};

/// Σ_f w_f · mean cross-entropy over the masked positions of field f, with
/// w_f = |V_f| / Σ|V|. Throws when nothing is masked.
Tensor weighted_loss(const FieldLogits& logits, const MaskedBatch& batch, const std::array<double, kFields>& weights);

/// Per-measure plan of how many notes each non-drum (track, instrument)
/// receives.
struct ScaffoldEntry {
  int track = 0;
  int instrument = 0;
  int count = 0;

  bool operator==(const ScaffoldEntry&) const = default;
};
using Scaffold = std::vector<std::vector<ScaffoldEntry>>;

/// The non-drum note counts actually present in a clip.
Scaffold scaffold_of(const QuantizedClip& clip);

/// Empirical per-measure count histogram for every non-drum (track, instrument).
struct ScaffoldStats {
  std::map<std::pair<int, int>, std::map<int, int>> histogram;  // (track, instrument) → count → frequency

  void add(const QuantizedClip& clip);
  Scaffold sample(int measures, Rng& rng) const;
  std::string serialize() const;
  static ScaffoldStats deserialize(const std::string& text);
};

enum class Role { Given, PositionSlot, PitchSlot };

/// Drum measures followed, per measure, by one (Position, Pitch) placeholder
/// pair per planned note. Placeholders keep the known track and instrument;
/// event and duration are masked.
struct Layout {
  IdSequence ids;
  std::vector<Role> roles;
};

Layout completion_layout(const QuantizedClip& drums, const Scaffold& scaffold, const Vocab& vocab);

/// Training form of the same layout built from a full clip: the non-drum
/// notes sit in the placeholders (per track, in time order) and their event
/// and duration fields are masked. With `rng`, a uniformly drawn share of
/// those fields is revealed instead (at least one stays masked), matching the
/// partly filled layouts seen during iterative completion.
MaskedBatch completion_example(const QuantizedClip& full, const Vocab& vocab, Rng* rng = nullptr);

struct CompletionOptions {
  drum::Sampler sampler{0.0, 0};
  double fraction_per_round = 0.1;
};

/// Fills every masked field of `layout`, most confident first, a fraction of
/// the original masks per round. Candidates follow the placeholder role.
IdSequence fill_layout(const BertGen& model, const Vocab& vocab, Layout layout, const CompletionOptions& options,
                       Rng& rng);

/// Drum tokens in, full canonical token sequence out (chords recomputed).
std::vector<codec::TokenQuad> complete_tracks(const BertGen& model, const Vocab& vocab,
                                              std::span<const codec::TokenQuad> drum_tokens, const Scaffold& scaffold,
                                              const CompletionOptions& options, Rng& rng);

struct BertTrainOptions {
  double mask_rate = 0.15;
  double completion_share = 0.5;  // fraction of examples drawn in completion layout
};

/// One Adam step on a batch of canonical id sequences (no BOS/EOS) with
/// masking drawn on the fly. Returns the mean loss.
double train_step_bert(const BertGen& model, ParamStore& store, const Vocab& vocab,
                       std::span<const IdSequence> batch, Rng& rng, std::uint64_t t,
                       const tensor::Schedule& schedule, const tensor::AdamConfig& adam = {},
                       const BertTrainOptions& options = {});

/// Fraction of masked (position, field) entries predicted exactly by argmax.
double masked_accuracy(const FieldLogits& logits, const MaskedBatch& batch);

}  // namespace stepscore::bert
