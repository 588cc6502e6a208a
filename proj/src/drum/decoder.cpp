#include "stepscore/drum/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stepscore/tensor/ops.hpp"

namespace stepscore::drum {

using namespace tensor;
using codec::EventKind;
using codec::Field;

FieldSizes field_sizes(const Vocab& vocab) {
  FieldSizes s{};
  for (Field f : codec::kFields) s[static_cast<std::size_t>(f)] = vocab.size(f);
  return s;
}

std::array<double, kFields> field_weights(const FieldSizes& sizes) {
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  std::array<double, kFields> w{};
  for (std::size_t f = 0; f < sizes.size(); ++f) w[f] = sizes[f] / total;
  return w;
}

std::vector<double> token_frames(const IdSequence& seq, const Vocab& vocab, double frames_per_slot) {
  std::vector<double> out(seq.size(), 0.0);
  int measure = -1;
  int slot = 0;
  double last = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int id = seq.at(i, Field::Event);
    if (id >= codec::kFirstContent) {
      const auto& e = vocab.event_at(id);
      if (e.kind == EventKind::Bom) {
        ++measure;
        slot = 0;
      } else if (e.kind == EventKind::Position) {
        slot = e.value;
      }
      last = (std::max(measure, 0) * codec::kSlotsPerMeasure + slot) * frames_per_slot;
      out[i] = last;
    } else {
      out[i] = id == codec::kBos ? 0.0 : last;
    }
  }
  return out;
}

BoolMatrix decoder_mask(const IdSequence& seq, const std::vector<bool>& is_pitch) {
  const auto n = static_cast<Eigen::Index>(seq.size());
  BoolMatrix allowed = BoolMatrix::Zero(n, n);
  auto pitch = [&](std::size_t i) {
    const int id = seq.at(i, Field::Event);
    return id >= 0 && static_cast<std::size_t>(id) < is_pitch.size() && is_pitch[static_cast<std::size_t>(id)];
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      allowed(i, j) = !(j < i && pitch(ui) && pitch(uj) && seq.pos_group[ui] == seq.pos_group[uj]);
    }
  }
  return allowed;
}

DecoderBlock::DecoderBlock(ParamStore& store, const std::string& name, const DrumConfig& c, Rng& rng)
    : norm_msa(store, name + ".ln_msa", c.d_model),
      msa(store, name + ".msa", c.d_model, c.heads, rng),
      relative(store, name + ".rel", c.heads, c.relative_clip),
      norm_vgm(store, name + ".ln_vgm", c.d_model),
      vgm(store, name + ".vgm", c.d_model, c.heads, rng),
      norm_ff(store, name + ".ln_ff", c.d_model),
      ff(store, name + ".ff", c.d_model, c.hidden, rng) {}

Tensor DecoderBlock::operator()(const Tensor& h, const BoolMatrix& mask, std::span<const int> groups,
                                const Tensor& context) const {
  const auto bias = relative(groups, groups);
  const Tensor a = norm_msa(h);
  Tensor x = add(h, msa(a, a, &mask, bias));
  x = add(x, vgm(norm_vgm(x), context));
  return add(x, ff(norm_ff(x)));
}

DrumDecoder::DrumDecoder(ParamStore& store, const std::string& name, const Vocab& vocab_, const DrumConfig& c,
                         Rng& rng)
    : config(c),
      sizes(field_sizes(vocab_)),
      encoder_norm(store, name + ".enc_norm", c.d_model),
      final_norm(store, name + ".final_norm", c.d_model),
      vocab(vocab_) {
  is_pitch.assign(static_cast<std::size_t>(sizes[0]), false);
  for (int id = codec::kFirstContent; id < sizes[0]; ++id)
    is_pitch[static_cast<std::size_t>(id)] = vocab.event_at(id).kind == EventKind::Pitch;
  const double embed_scale = 1.0 / std::sqrt(static_cast<double>(c.d_model));
  for (Field f : codec::kFields) {
    const auto i = static_cast<std::size_t>(f);
    embeddings[i] = store.add(name + ".embed." + codec::field_name(f), normal(sizes[i], c.d_model, embed_scale, rng));
  }
  for (int b = 0; b < c.encoder_blocks; ++b)
    encoder.emplace_back(store, name + ".enc" + std::to_string(b), c.d_model, c.heads, c.hidden, rng);
  for (int b = 0; b < c.blocks; ++b) blocks.emplace_back(store, name + ".dec" + std::to_string(b), c, rng);
  for (Field f : codec::kFields) {
    const auto i = static_cast<std::size_t>(f);
    heads[i] = nn::Linear(store, name + ".head." + codec::field_name(f), c.d_model, sizes[i], rng);
  }
}

Tensor DrumDecoder::encode_context(const Tensor& z) const {
  if (z.cols() != config.d_model) throw ShapeError("drum decoder: Z has shape " + z.shape_string());
  std::vector<double> frames(static_cast<std::size_t>(z.rows()));
  std::iota(frames.begin(), frames.end(), 0.0);
  Tensor h = add(z, Tensor::constant(nn::sinusoidal_encoding(frames, config.d_model)));
  for (const auto& layer : encoder) h = layer(h);
  return encoder_norm(h);
}

FieldLogits DrumDecoder::forward(const IdSequence& prefix, std::span<const double> frames,
                                 const Tensor& context) const {
  const auto n = prefix.size();
  if (n == 0) throw ShapeError("drum decoder: empty prefix");
  if (n > static_cast<std::size_t>(config.max_length)) {
    throw ShapeError("drum decoder: prefix of " + std::to_string(n) + " tokens exceeds the maximum length " +
                     std::to_string(config.max_length));
  }
  Tensor h = Tensor::constant(nn::sinusoidal_encoding(frames, config.d_model));
  for (Field f : codec::kFields) {
    const auto i = static_cast<std::size_t>(f);
    std::vector<int> ids(n);
    for (std::size_t k = 0; k < n; ++k) ids[k] = prefix.at(k, f);
    h = add(h, embed(embeddings[i], ids));
  }
  const BoolMatrix mask = decoder_mask(prefix, is_pitch);
  for (const auto& block : blocks) h = block(h, mask, prefix.pos_group, context);
  const Tensor out = final_norm(h);
  FieldLogits logits;
  for (std::size_t i = 0; i < heads.size(); ++i) logits[i] = heads[i](out);
  return logits;
}

FieldLogits DrumDecoder::operator()(const IdSequence& prefix, const Tensor& z) const {
  const auto frames = token_frames(prefix, vocab, config.frames_per_slot);
  return forward(prefix, frames, encode_context(z));
}

Tensor next_token_loss(const FieldLogits& logits, const IdSequence& seq, const std::array<double, kFields>& weights) {
  const auto n = seq.size();
  if (n < 2) throw ShapeError("next-token loss: need at least two tokens");
  Tensor total;
  for (std::size_t f = 0; f < logits.size(); ++f) {
    std::vector<int> targets(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) targets[i] = seq.ids[i + 1][f];
    const std::vector<double> w(n - 1, weights[f] / static_cast<double>(n - 1));
    const Tensor term = cross_entropy(slice_rows(logits[f], 0, static_cast<Eigen::Index>(n - 1)), targets, w);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

double next_token_accuracy(const FieldLogits& logits, const IdSequence& seq) {
  const auto n = seq.size();
  if (n < 2) return 1.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    bool ok = true;
    for (std::size_t f = 0; f < logits.size(); ++f) {
      Eigen::Index best = 0;
      logits[f].value().row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      ok = ok && best == seq.ids[i + 1][f];
    }
    correct += ok;
  }
  return static_cast<double>(correct) / static_cast<double>(n - 1);
}

int sample(const Eigen::Ref<const Eigen::RowVectorXd>& logits, const std::vector<bool>& allowed, const Sampler& sampler,
           Rng& rng) {
  std::vector<int> candidates;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (static_cast<std::size_t>(i) < allowed.size() && allowed[static_cast<std::size_t>(i)])
      candidates.push_back(static_cast<int>(i));
  if (candidates.empty()) throw std::runtime_error("sampler: no legal token");
  // stable order: by logit, ties by id
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) { return logits(a) > logits(b); });
  if (sampler.temperature <= 0.0) return candidates.front();
  if (sampler.top_k > 0 && candidates.size() > static_cast<std::size_t>(sampler.top_k))
    candidates.resize(static_cast<std::size_t>(sampler.top_k));
  std::vector<double> p(candidates.size());
  const double top = logits(candidates.front());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    p[i] = std::exp((logits(candidates[i]) - top) / sampler.temperature);
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    acc += p[i];
    if (u < acc) return candidates[i];
  }
  return candidates.back();
}

namespace {

// Which events may follow, given where we are in the measure grammar.
struct Grammar {
  enum class State { Start, Bom, Position, Chord, Pitch } state = State::Start;
  int measures = 0;
  int slot = -1;
  std::vector<int> group_pitches;

  std::vector<bool> allowed(const Vocab& vocab, int max_measures, bool room_for_two) const {
    const int n = vocab.size(Field::Event);
    std::vector<bool> ok(static_cast<std::size_t>(n), false);
    const bool more_measures = max_measures <= 0 || measures < max_measures;
    const bool can_end = state == State::Bom || state == State::Pitch;
    for (int id = codec::kFirstContent; id < n; ++id) {
      const auto& e = vocab.event_at(id);
      bool legal = false;
      switch (e.kind) {
        case EventKind::Bom:
          legal = (state == State::Start || ((state == State::Bom || state == State::Pitch) && more_measures)) &&
                  room_for_two;
          break;
        case EventKind::Position:
          legal = (state == State::Bom || (state == State::Pitch && e.value > slot)) && room_for_two;
          break;
        case EventKind::Chord:
          legal = state == State::Position && room_for_two;
          break;
        case EventKind::Pitch:
          legal = (state == State::Position || state == State::Chord ||
                   (state == State::Pitch && std::find(group_pitches.begin(), group_pitches.end(), e.value) ==
                                                 group_pitches.end()));
          break;
      }
      ok[static_cast<std::size_t>(id)] = legal;
    }
    ok[codec::kEos] = can_end;
    return ok;
  }

  void advance(const codec::Event& e) {
    switch (e.kind) {
      case EventKind::Bom:
        state = State::Bom;
        ++measures;
        slot = -1;
        break;
      case EventKind::Position:
        state = State::Position;
        slot = e.value;
        group_pitches.clear();
        break;
      case EventKind::Chord:
        state = State::Chord;
        break;
      case EventKind::Pitch:
        state = State::Pitch;
        group_pitches.push_back(e.value);
        break;
    }
  }
};

std::vector<bool> content_only(int size) {
  std::vector<bool> ok(static_cast<std::size_t>(size), false);
  for (int i = codec::kFirstContent; i < size; ++i) ok[static_cast<std::size_t>(i)] = true;
  return ok;
}

}  // namespace

Generated generate(const DrumDecoder& decoder, const Tensor& z, const GenerateOptions& options, Rng& rng) {
  const Vocab& vocab = decoder.vocab;
  const Tensor context = decoder.encode_context(z);
  const int drum_id = vocab.id_of(Field::Instrument, codec::kDrumInstrument);
  const auto track_id = vocab.find(Field::Track, options.drum_track);
  const auto durations = content_only(vocab.size(Field::Duration));

  Generated out;
  out.ids.ids.push_back({codec::kBos, codec::kBos, codec::kBos, codec::kBos});
  out.ids.pos_group.push_back(0);
  Grammar grammar;
  int group = 0;
  const auto max_len = static_cast<std::size_t>(decoder.config.max_length);
  while (out.ids.size() < max_len) {
    const auto frames = token_frames(out.ids, vocab, decoder.config.frames_per_slot);
    const auto logits = decoder.forward(out.ids, frames, context);
    const auto last = static_cast<Eigen::Index>(out.ids.size() - 1);
    // a structural token needs a following Pitch to stay decodable
    const bool room_for_two = out.ids.size() + 2 < max_len;
    const auto legal = grammar.allowed(vocab, options.max_measures, room_for_two);
    const int ev = sample(logits[0].value().row(last), legal, options.sampler, rng);
    if (ev == codec::kEos) {
      out.ids.ids.push_back({codec::kEos, codec::kEos, codec::kEos, codec::kEos});
      out.ids.pos_group.push_back(group + 1);
      break;
    }
    const auto& event = vocab.event_at(ev);
    std::array<int, kFields> quad{ev, codec::kNone, codec::kNone, codec::kNone};
    codec::TokenQuad token;
    token.event = event;
    if (event.kind == EventKind::Pitch) {
      quad[1] = sample(logits[1].value().row(last), durations, options.sampler, rng);
      if (track_id) {
        quad[2] = *track_id;
      } else {
        quad[2] = sample(logits[2].value().row(last), content_only(vocab.size(Field::Track)), options.sampler, rng);
      }
      quad[3] = drum_id;
      token.duration = vocab.value_at(Field::Duration, quad[1]);
      token.track = vocab.value_at(Field::Track, quad[2]);
      token.instrument = codec::kDrumInstrument;
    }
    if (event.kind == EventKind::Position) ++group;
    token.pos_group = group;
    grammar.advance(event);
    out.ids.ids.push_back(quad);
    out.ids.pos_group.push_back(group);
    out.tokens.push_back(token);
  }
  return out;
}

DrumModel::DrumModel(ParamStore& store, const Vocab& vocab, const motion::ContextConfig& context_config,
                     const DrumConfig& drum_config, Rng& rng)
    : context(store, "motion", context_config, rng), decoder(store, "drum", vocab, drum_config, rng) {
  if (context_config.d_model != drum_config.d_model)
    throw ShapeError("drum model: context width " + std::to_string(context_config.d_model) +
                     " differs from decoder width " + std::to_string(drum_config.d_model));
}

DrumLosses train_step(const DrumModel& model, ParamStore& store, std::span<const DrumExample> batch, std::uint64_t t,
                      const Schedule& schedule, const AdamConfig& adam, const DrumTrainOptions& options) {
  if (batch.empty()) throw std::invalid_argument("drum train step: empty batch");
  const auto weights = field_weights(model.decoder.sizes);
  store.zero_grad();
  Tensor total;
  DrumLosses losses;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const auto ctx = model.context(ex.frames, *ex.graph, ex.root, &ex.beats);
    const Tensor token = next_token_loss(model.decoder(ex.target, ctx.z), ex.target, weights);
    const Tensor beat = motion::beat_loss(ctx.beat_logits, ex.beats, options.beat_class_weight);
    const Tensor clip = scale(add(token, scale(beat, options.beat_loss_scale)), inv);
    total = total.defined() ? add(total, clip) : clip;
    losses.token += token.item() * inv;
    losses.beat += beat.item() * inv;
  }
  losses.total = total.item();
  backward(total, store);
  adam_step(store, t, schedule, adam);
  return losses;
}

}  // namespace stepscore::drum
