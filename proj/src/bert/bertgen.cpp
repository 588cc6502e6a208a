#include "stepscore/bert/bertgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "stepscore/tensor/ops.hpp"

namespace stepscore::bert {

using namespace tensor;
using codec::EventKind;
using codec::kFirstContent;
using codec::kMask;
using codec::kNone;

namespace {

constexpr std::size_t fi(Field f) { return static_cast<std::size_t>(f); }

bool is_pitch_id(const Vocab& vocab, int id) {
  return id >= kFirstContent && id < vocab.size(Field::Event) && vocab.event_at(id).kind == EventKind::Pitch;
}

}  // namespace

std::size_t MaskedBatch::masked_count() const {
  std::size_t n = 0;
  for (const auto& m : masked) n += static_cast<std::size_t>(std::count(m.begin(), m.end(), true));
  return n;
}

std::vector<int> measure_of(const IdSequence& seq, const Vocab& vocab) {
  std::vector<int> out(seq.size());
  int measure = -1;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int id = seq.at(i, Field::Event);
    if (id >= kFirstContent && vocab.event_at(id).kind == EventKind::Bom) ++measure;
    out[i] = measure;
  }
  return out;
}

MaskedBatch measure_mask(const IdSequence& seq, const Vocab& vocab, Rng& rng, double rate) {
  MaskedBatch batch;
  batch.input = seq;
  batch.target = seq;
  for (auto& m : batch.masked) m.assign(seq.size(), false);
  const auto measures = measure_of(seq, vocab);

  auto candidates_for = [&](Field f) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const int ev = seq.at(i, Field::Event);
      if (f == Field::Event ? ev >= kFirstContent : (is_pitch_id(vocab, ev) && seq.at(i, f) >= kFirstContent))
        out.push_back(i);
    }
    return out;
  };

  batch.field = codec::kFields[std::uniform_int_distribution<std::size_t>(0, kFields - 1)(rng)];
  auto candidates = candidates_for(batch.field);
  if (candidates.empty()) {
    batch.field = Field::Event;
    candidates = candidates_for(Field::Event);
  }
  if (candidates.empty()) throw std::invalid_argument("measure mask: sequence has no maskable tokens");

  std::set<int> candidate_measures;
  for (auto i : candidates) candidate_measures.insert(measures[i]);
  const bool spread = candidate_measures.size() >= 2;
  batch.single_measure = !spread;

  const auto n = candidates.size();
  auto k = static_cast<std::size_t>(std::max<long long>(1, std::llround(rate * static_cast<double>(n))));
  if (spread) k = std::max<std::size_t>(k, 2);
  k = std::min(k, n);

  // partial Fisher-Yates: the first k entries become the selection
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
    std::swap(candidates[i], candidates[j]);
  }
  std::vector<std::size_t> chosen(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  if (spread) {
    const int first = measures[chosen.front()];
    const bool one_measure =
        std::all_of(chosen.begin(), chosen.end(), [&](std::size_t i) { return measures[i] == first; });
    if (one_measure) {
      std::vector<std::size_t> others;
      for (std::size_t i = k; i < n; ++i)
        if (measures[candidates[i]] != first) others.push_back(candidates[i]);
      chosen.back() = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
    }
  }
  std::sort(chosen.begin(), chosen.end());

  const auto f = fi(batch.field);
  const int field_size = vocab.size(batch.field);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> random_id(kFirstContent, field_size - 1);
  for (auto i : chosen) {
    batch.masked[f][i] = true;
    const double u = unit(rng);
    if (u < 0.8) {
      batch.input.ids[i][f] = kMask;
      batch.replacements.push_back(Replacement::Mask);
    } else if (u < 0.9) {
      batch.input.ids[i][f] = random_id(rng);
      batch.replacements.push_back(Replacement::Random);
    } else {
      batch.replacements.push_back(Replacement::Keep);
    }
  }
  return batch;
}

BertGen::BertGen(ParamStore& store, const std::string& name, const Vocab& vocab, const BertConfig& c, Rng& rng)
    : config(c), sizes(drum::field_sizes(vocab)), final_norm(store, name + ".final_norm", c.hidden) {
  const double embed_scale = 1.0 / std::sqrt(static_cast<double>(c.hidden));
  for (Field f : codec::kFields) {
    embeddings[fi(f)] =
        store.add(name + ".embed." + codec::field_name(f), normal(sizes[fi(f)], c.hidden, embed_scale, rng));
  }
  for (int l = 0; l < c.layers; ++l) {
    layers.emplace_back(store, name + ".layer" + std::to_string(l), c.hidden, c.heads, c.ff, rng);
    relative.emplace_back(store, name + ".rel" + std::to_string(l), c.heads, c.relative_clip);
  }
  for (Field f : codec::kFields) {
    dense[fi(f)] = nn::Linear(store, name + ".dense." + codec::field_name(f), c.hidden, c.hidden, rng);
    heads[fi(f)] = nn::Linear(store, name + ".head." + codec::field_name(f), c.hidden, sizes[fi(f)], rng);
  }
}

FieldLogits BertGen::operator()(const IdSequence& input) const {
  const auto n = input.size();
  if (n == 0) throw ShapeError("bertgen: empty input");
  if (n > static_cast<std::size_t>(config.max_length)) {
    throw ShapeError("bertgen: " + std::to_string(n) + " tokens exceeds the maximum length " +
                     std::to_string(config.max_length));
  }
  Tensor h;
  for (Field f : codec::kFields) {
    std::vector<int> ids(n);
    for (std::size_t k = 0; k < n; ++k) ids[k] = input.at(k, f);
    const Tensor e = embed(embeddings[fi(f)], ids);
    h = h.defined() ? add(h, e) : e;
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto bias = relative[l](input.pos_group, input.pos_group);
    h = layers[l](h, nullptr, bias);
  }
  h = final_norm(h);
  FieldLogits out;
  for (std::size_t f = 0; f < out.size(); ++f) out[f] = heads[f](relu(dense[f](h)));
  return out;
}

Tensor weighted_loss(const FieldLogits& logits, const MaskedBatch& batch, const std::array<double, kFields>& weights) {
  Tensor total;
  for (std::size_t f = 0; f < logits.size(); ++f) {
    const auto count = static_cast<double>(std::count(batch.masked[f].begin(), batch.masked[f].end(), true));
    if (count == 0) continue;
    std::vector<int> targets(batch.target.size());
    std::vector<double> w(batch.target.size(), 0.0);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      targets[i] = batch.target.ids[i][f];
      if (batch.masked[f][i]) w[i] = weights[f] / count;
    }
    const Tensor term = cross_entropy(logits[f], targets, w);
    total = total.defined() ? add(total, term) : term;
  }
  if (!total.defined()) throw std::invalid_argument("weighted loss: no masked positions");
  return total;
}

double masked_accuracy(const FieldLogits& logits, const MaskedBatch& batch) {
  std::size_t hit = 0;
  std::size_t total = 0;
  for (std::size_t f = 0; f < logits.size(); ++f) {
    for (std::size_t i = 0; i < batch.target.size(); ++i) {
      if (!batch.masked[f][i]) continue;
      Eigen::Index best = 0;
      logits[f].value().row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      hit += best == batch.target.ids[i][f];
      ++total;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// scaffolds

Scaffold scaffold_of(const QuantizedClip& clip) {
  Scaffold out;
  for (const auto& m : clip.measures) {
    std::map<std::pair<int, int>, int> counts;
    for (const auto& e : m.events)
      for (const auto& n : e.notes)
        if (n.instrument != codec::kDrumInstrument) ++counts[{n.track, n.instrument}];
    std::vector<ScaffoldEntry> entries;
    for (const auto& [key, count] : counts) entries.push_back({key.first, key.second, count});
    out.push_back(std::move(entries));
  }
  return out;
}

void ScaffoldStats::add(const QuantizedClip& clip) {
  std::set<std::pair<int, int>> seen;
  for (const auto& m : clip.measures)
    for (const auto& e : m.events)
      for (const auto& n : e.notes)
        if (n.instrument != codec::kDrumInstrument) seen.insert({n.track, n.instrument});
  const auto plan = scaffold_of(clip);
  for (const auto& key : seen) {
    for (const auto& measure : plan) {
      int count = 0;
      for (const auto& e : measure)
        if (e.track == key.first && e.instrument == key.second) count = e.count;
      ++histogram[key][count];
    }
  }
}

Scaffold ScaffoldStats::sample(int measures, Rng& rng) const {
  Scaffold out(static_cast<std::size_t>(std::max(measures, 0)));
  for (auto& m : out) {
    for (const auto& [key, counts] : histogram) {
      int total = 0;
      for (const auto& [count, freq] : counts) total += freq;
      if (total == 0) continue;
      int draw = std::uniform_int_distribution<int>(0, total - 1)(rng);
      int chosen = 0;
      for (const auto& [count, freq] : counts) {
        if (draw < freq) {
          chosen = count;
          break;
        }
        draw -= freq;
      }
      if (chosen > 0) m.push_back({key.first, key.second, chosen});
    }
  }
  return out;
}

std::string ScaffoldStats::serialize() const {
  std::ostringstream out;
  for (const auto& [key, counts] : histogram)
    for (const auto& [count, freq] : counts)
      out << key.first << ' ' << key.second << ' ' << count << ' ' << freq << '\n';
  return out.str();
}

ScaffoldStats ScaffoldStats::deserialize(const std::string& text) {
  ScaffoldStats stats;
  std::istringstream in(text);
  int track = 0;
  int instrument = 0;
  int count = 0;
  int freq = 0;
  while (in >> track >> instrument >> count >> freq) stats.histogram[{track, instrument}][count] = freq;
  return stats;
}

// ---------------------------------------------------------------------------
// completion layout

namespace {

struct LayoutBuilder {
  const Vocab& vocab;
  Layout layout;
  int group = 0;

  void push(std::array<int, kFields> ids, Role role, bool is_position) {
    if (is_position) ++group;
    layout.ids.ids.push_back(ids);
    layout.ids.pos_group.push_back(group);
    layout.roles.push_back(role);
  }

  void given_measure(const codec::Measure* measure) {
    push({vocab.id_of_event(codec::bom()), kNone, kNone, kNone}, Role::Given, false);
    if (measure == nullptr) return;
    QuantizedClip one;
    one.measures.push_back(*measure);
    const auto tokens = codec::encode(one, vocab);
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto& t = tokens[i];
      push({vocab.id_of_event(t.event), vocab.id_of(Field::Duration, t.duration), vocab.id_of(Field::Track, t.track),
            vocab.id_of(Field::Instrument, t.instrument)},
           Role::Given, t.event.kind == EventKind::Position);
    }
  }
};

QuantizedClip only(const QuantizedClip& clip, bool drums) {
  QuantizedClip out;
  out.ticks_per_slot = clip.ticks_per_slot;
  for (const auto& m : clip.measures) {
    codec::Measure kept;
    for (const auto& e : m.events) {
      codec::SlotEvent ke{e.slot, std::nullopt, {}};
      for (const auto& n : e.notes)
        if ((n.instrument == codec::kDrumInstrument) == drums) ke.notes.push_back(n);
      if (!ke.notes.empty()) kept.events.push_back(std::move(ke));
    }
    out.measures.push_back(std::move(kept));
  }
  return out;
}

}  // namespace

Layout completion_layout(const QuantizedClip& drums, const Scaffold& scaffold, const Vocab& vocab) {
  LayoutBuilder b{vocab, {}, 0};
  const auto measures = std::max(drums.measures.size(), scaffold.size());
  for (std::size_t m = 0; m < measures; ++m) {
    b.given_measure(m < drums.measures.size() ? &drums.measures[m] : nullptr);
    if (m >= scaffold.size()) continue;
    for (const auto& entry : scaffold[m]) {
      const int track = vocab.id_of(Field::Track, entry.track);
      const int instrument = vocab.id_of(Field::Instrument, entry.instrument);
      for (int k = 0; k < entry.count; ++k) {
        b.push({kMask, kNone, kNone, kNone}, Role::PositionSlot, true);
        b.push({kMask, kMask, track, instrument}, Role::PitchSlot, false);
      }
    }
  }
  return b.layout;
}

MaskedBatch completion_example(const QuantizedClip& full, const Vocab& vocab, Rng* rng) {
  const auto drums = only(full, true);
  const auto others = only(full, false);
  const auto layout = completion_layout(drums, scaffold_of(others), vocab);

  MaskedBatch batch;
  batch.input = layout.ids;
  batch.target = layout.ids;
  batch.field = Field::Event;
  for (auto& m : batch.masked) m.assign(layout.ids.size(), false);

  // Walk the placeholders in the order the layout emitted them: per measure,
  // per (track, instrument) ascending, notes in time then pitch order.
  std::size_t cursor = 0;
  auto next_placeholder = [&]() {
    while (layout.roles[cursor] != Role::PositionSlot) ++cursor;
    return cursor;
  };
  for (const auto& m : others.measures) {
    std::map<std::pair<int, int>, std::vector<std::pair<int, codec::SlotNote>>> by_key;
    for (const auto& e : m.events)
      for (const auto& n : e.notes) by_key[{n.track, n.instrument}].emplace_back(e.slot, n);
    for (const auto& [key, notes] : by_key) {
      for (const auto& [slot, note] : notes) {
        const std::size_t p = next_placeholder();
        batch.target.ids[p][fi(Field::Event)] = vocab.id_of_event(codec::position(slot));
        batch.target.ids[p + 1][fi(Field::Event)] = vocab.id_of_event(codec::pitch(note.pitch));
        batch.target.ids[p + 1][fi(Field::Duration)] = vocab.id_of(Field::Duration, note.duration);
        batch.masked[fi(Field::Event)][p] = true;
        batch.masked[fi(Field::Event)][p + 1] = true;
        batch.masked[fi(Field::Duration)][p + 1] = true;
        cursor = p + 2;
      }
    }
  }
  if (rng != nullptr && batch.masked_count() > 1) {
    std::vector<std::pair<std::size_t, std::size_t>> entries;
    for (std::size_t f = 0; f < kFields; ++f)
      for (std::size_t i = 0; i < batch.masked[f].size(); ++i)
        if (batch.masked[f][i]) entries.emplace_back(f, i);
    const double share = std::uniform_real_distribution<double>(0.0, 1.0)(*rng);
    auto reveal = static_cast<std::size_t>(share * static_cast<double>(entries.size()));
    reveal = std::min(reveal, entries.size() - 1);
    for (std::size_t k = 0; k < reveal; ++k) {
      const auto j = std::uniform_int_distribution<std::size_t>(k, entries.size() - 1)(*rng);
      std::swap(entries[k], entries[j]);
      const auto [f, i] = entries[k];
      batch.masked[f][i] = false;
      batch.input.ids[i][f] = batch.target.ids[i][f];
    }
  }
  return batch;
}

IdSequence fill_layout(const BertGen& model, const Vocab& vocab, Layout layout, const CompletionOptions& options,
                       Rng& rng) {
  struct Slot {
    std::size_t index;
    std::size_t field;
  };
  std::vector<Slot> open;
  for (std::size_t i = 0; i < layout.ids.size(); ++i)
    for (std::size_t f = 0; f < kFields; ++f)
      if (layout.ids.ids[i][f] == kMask) open.push_back({i, f});
  if (open.empty()) return layout.ids;

  std::vector<std::vector<bool>> allowed_event(3);
  const int events = vocab.size(Field::Event);
  for (auto& a : allowed_event) a.assign(static_cast<std::size_t>(events), false);
  for (int id = kFirstContent; id < events; ++id) {
    const auto kind = vocab.event_at(id).kind;
    allowed_event[0][static_cast<std::size_t>(id)] = true;
    allowed_event[1][static_cast<std::size_t>(id)] = kind == EventKind::Position;
    allowed_event[2][static_cast<std::size_t>(id)] = kind == EventKind::Pitch;
  }
  auto allowed_for = [&](const Slot& s) {
    if (s.field == 0) return allowed_event[static_cast<std::size_t>(layout.roles[s.index])];
    std::vector<bool> a(static_cast<std::size_t>(model.sizes[s.field]), false);
    for (std::size_t id = kFirstContent; id < a.size(); ++id) a[id] = true;
    return a;
  };

  const auto per_round = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(options.fraction_per_round * static_cast<double>(open.size()))));
  while (!open.empty()) {
    const auto logits = model(layout.ids);
    std::vector<std::pair<double, std::size_t>> confidence;
    for (std::size_t k = 0; k < open.size(); ++k) {
      const auto& s = open[k];
      const auto allowed = allowed_for(s);
      const Eigen::RowVectorXd row = logits[s.field].value().row(static_cast<Eigen::Index>(s.index));
      double top = -std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < row.size(); ++c)
        if (allowed[static_cast<std::size_t>(c)]) top = std::max(top, row(c));
      double total = 0.0;
      for (Eigen::Index c = 0; c < row.size(); ++c)
        if (allowed[static_cast<std::size_t>(c)]) total += std::exp(row(c) - top);
      confidence.emplace_back(1.0 / total, k);  // probability of the best allowed token
    }
    std::stable_sort(confidence.begin(), confidence.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto take = std::min(per_round, open.size());
    std::vector<bool> done(open.size(), false);
    for (std::size_t r = 0; r < take; ++r) {
      const auto& s = open[confidence[r].second];
      const Eigen::RowVectorXd row = logits[s.field].value().row(static_cast<Eigen::Index>(s.index));
      layout.ids.ids[s.index][s.field] = drum::sample(row, allowed_for(s), options.sampler, rng);
      done[confidence[r].second] = true;
    }
    std::vector<Slot> rest;
    for (std::size_t k = 0; k < open.size(); ++k)
      if (!done[k]) rest.push_back(open[k]);
    open = std::move(rest);
  }
  return layout.ids;
}

std::vector<codec::TokenQuad> complete_tracks(const BertGen& model, const Vocab& vocab,
                                              std::span<const codec::TokenQuad> drum_tokens, const Scaffold& scaffold,
                                              const CompletionOptions& options, Rng& rng) {
  const QuantizedClip given = codec::decode(drum_tokens, 30);
  auto layout = completion_layout(given, scaffold, vocab);
  if (layout.ids.size() > static_cast<std::size_t>(model.config.max_length)) {
    throw std::invalid_argument("complete: layout of " + std::to_string(layout.ids.size()) +
                                " tokens exceeds the maximum length " + std::to_string(model.config.max_length));
  }
  const auto filled = fill_layout(model, vocab, std::move(layout), options, rng);
  QuantizedClip clip = codec::decode(codec::from_ids(filled, vocab), given.ticks_per_slot);
  for (auto& m : clip.measures) {
    for (auto& e : m.events) {
      // two placeholders may land on the same note; keep one
      e.notes.erase(std::unique(e.notes.begin(), e.notes.end(),
                                [](const auto& a, const auto& b) {
                                  return a.pitch == b.pitch && a.track == b.track && a.instrument == b.instrument;
                                }),
                    e.notes.end());
    }
  }
  codec::assign_chords(clip);
  return codec::encode(clip);
}

double train_step_bert(const BertGen& model, ParamStore& store, const Vocab& vocab, std::span<const IdSequence> batch,
                       Rng& rng, std::uint64_t t, const Schedule& schedule, const AdamConfig& adam,
                       const BertTrainOptions& options) {
  if (batch.empty()) throw std::invalid_argument("bert train step: empty batch");
  const auto weights = drum::field_weights(model.sizes);
  store.zero_grad();
  Tensor total;
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& seq : batch) {
    MaskedBatch masked;
    bool built = false;
    if (unit(rng) < options.completion_share) {
      const auto clip = codec::decode(codec::from_ids(seq, vocab), 30);
      masked = completion_example(clip, vocab, &rng);
      built = masked.masked_count() > 0;
    }
    if (!built) masked = measure_mask(seq, vocab, rng, options.mask_rate);
    const Tensor loss = scale(weighted_loss(model(masked.input), masked, weights), inv);
    total = total.defined() ? add(total, loss) : loss;
  }
  const double value = total.item();
  backward(total, store);
  adam_step(store, t, schedule, adam);
  return value;
}

}  // namespace stepscore::bert
