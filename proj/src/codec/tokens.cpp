#include "stepscore/codec/tokens.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace stepscore::codec {

namespace {

int field_index(Field f) { return static_cast<int>(f) - 1; }

std::string opt_str(const std::optional<int>& v) { return v ? std::to_string(*v) : "-"; }

std::optional<int> parse_opt(const std::string& s, std::size_t line) {
  if (s == "-") return std::nullopt;
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CodecError("token text line " + std::to_string(line) + ": bad integer field '" + s + "'");
  }
}

}  // namespace

const char* field_name(Field f) {
  switch (f) {
    case Field::Event: return "event";
    case Field::Duration: return "duration";
    case Field::Track: return "track";
    case Field::Instrument: return "instrument";
  }
  return "?";
}

std::string to_string(const Event& e) {
  switch (e.kind) {
    case EventKind::Bom: return "BOM";
    case EventKind::Chord: return "Chord_" + std::to_string(e.value);
    case EventKind::Position: return "Position_" + std::to_string(e.value);
    case EventKind::Pitch: return "Pitch_" + std::to_string(e.value);
  }
  return "?";
}

Event parse_event(const std::string& text) {
  if (text == "BOM") return bom();
  const auto us = text.find('_');
  if (us == std::string::npos) throw CodecError("unknown event '" + text + "'");
  const std::string kind = text.substr(0, us);
  int value = 0;
  try {
    std::size_t used = 0;
    value = std::stoi(text.substr(us + 1), &used);
    if (used != text.size() - us - 1) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw CodecError("bad event value in '" + text + "'");
  }
  if (kind == "Chord" && value >= 0 && value < kChordCount) return chord(value);
  if (kind == "Position" && value >= 0 && value < kSlotsPerMeasure) return position(value);
  if (kind == "Pitch" && value >= 0 && value <= 127) return pitch(value);
  throw CodecError("unknown event '" + text + "'");
}

// ---------------------------------------------------------------------------
// Vocab

Vocab Vocab::build(std::span<const std::vector<TokenQuad>> corpus) {
  std::set<Event> events{bom()};
  std::array<std::set<int>, 3> values;
  values[field_index(Field::Instrument)].insert(kCorpusInstruments.begin(), kCorpusInstruments.end());
  for (const auto& seq : corpus) {
    for (const auto& t : seq) {
      events.insert(t.event);
      if (t.duration) values[field_index(Field::Duration)].insert(*t.duration);
      if (t.track) values[field_index(Field::Track)].insert(*t.track);
      if (t.instrument) values[field_index(Field::Instrument)].insert(*t.instrument);
    }
  }
  Vocab v;
  v.events_.assign(events.begin(), events.end());
  for (int i = 0; i < 3; ++i) v.values_[i].assign(values[i].begin(), values[i].end());
  return v;
}

int Vocab::content_size(Field f) const {
  if (f == Field::Event) return static_cast<int>(events_.size());
  return static_cast<int>(values_[field_index(f)].size());
}

const std::vector<int>& Vocab::values(Field f) const {
  if (f == Field::Event) throw CodecError("Vocab::values: event field has no integer table");
  return values_[field_index(f)];
}

std::optional<int> Vocab::find_event(const Event& e) const {
  auto it = std::lower_bound(events_.begin(), events_.end(), e);
  if (it == events_.end() || *it != e) return std::nullopt;
  return kFirstContent + static_cast<int>(it - events_.begin());
}

std::optional<int> Vocab::find(Field f, int value) const {
  const auto& table = values(f);
  auto it = std::lower_bound(table.begin(), table.end(), value);
  if (it == table.end() || *it != value) return std::nullopt;
  return kFirstContent + static_cast<int>(it - table.begin());
}

int Vocab::id_of_event(const Event& e) const {
  if (auto id = find_event(e)) return *id;
  throw CodecError("token not in vocabulary: field event value " + to_string(e));
}

int Vocab::id_of(Field f, std::optional<int> value) const {
  if (!value) return kNone;
  if (auto id = find(f, *value)) return *id;
  throw CodecError(std::string("token not in vocabulary: field ") + field_name(f) + " value " +
                   std::to_string(*value));
}

const Event& Vocab::event_at(int id) const {
  if (id < kFirstContent || id >= size(Field::Event)) {
    throw CodecError("event id " + std::to_string(id) + " is not a content id");
  }
  return events_[static_cast<std::size_t>(id - kFirstContent)];
}

int Vocab::value_at(Field f, int id) const {
  const auto& table = values(f);
  if (id < kFirstContent || id >= size(f)) {
    throw CodecError(std::string(field_name(f)) + " id " + std::to_string(id) + " is not a content id");
  }
  return table[static_cast<std::size_t>(id - kFirstContent)];
}

std::string Vocab::serialize() const {
  std::ostringstream out;
  for (const auto& e : events_) out << "event\t" << to_string(e) << '\n';
  for (Field f : {Field::Duration, Field::Track, Field::Instrument}) {
    for (int v : values(f)) out << field_name(f) << '\t' << v << '\n';
  }
  return out.str();
}

Vocab Vocab::deserialize(const std::string& text) {
  Vocab v;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw CodecError("vocab: malformed line '" + line + "'");
    const std::string name = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    if (name == "event") {
      v.events_.push_back(parse_event(value));
      continue;
    }
    bool known = false;
    for (Field f : {Field::Duration, Field::Track, Field::Instrument}) {
      if (name == field_name(f)) {
        v.values_[field_index(f)].push_back(std::stoi(value));
        known = true;
      }
    }
    if (!known) throw CodecError("vocab: unknown field '" + name + "'");
  }
  if (!std::is_sorted(v.events_.begin(), v.events_.end())) throw CodecError("vocab: event table not sorted");
  return v;
}

// ---------------------------------------------------------------------------
// encode / decode

std::vector<TokenQuad> encode(const QuantizedClip& clip) {
  std::vector<TokenQuad> out;
  int group = 0;
  for (const auto& m : clip.measures) {
    out.push_back({bom(), {}, {}, {}, group});
    int last_slot = -1;
    for (const auto& e : m.events) {
      if (e.slot < 0 || e.slot >= kSlotsPerMeasure) {
        throw CodecError("encode: slot " + std::to_string(e.slot) + " outside the measure");
      }
      if (e.slot <= last_slot) throw CodecError("encode: slots must be strictly increasing in a measure");
      if (e.notes.empty()) throw CodecError("encode: empty slot event");
      last_slot = e.slot;
      ++group;
      out.push_back({position(e.slot), {}, {}, {}, group});
      if (e.chord) out.push_back({chord(*e.chord), {}, {}, {}, group});
      auto notes = e.notes;
      std::sort(notes.begin(), notes.end());
      for (const auto& n : notes) {
        out.push_back({pitch(n.pitch), n.duration, n.track, n.instrument, group});
      }
    }
  }
  return out;
}

std::vector<TokenQuad> encode(const QuantizedClip& clip, const Vocab& vocab) {
  auto out = encode(clip);
  for (const auto& t : out) {
    vocab.id_of_event(t.event);
    vocab.id_of(Field::Duration, t.duration);
    vocab.id_of(Field::Track, t.track);
    vocab.id_of(Field::Instrument, t.instrument);
  }
  return out;
}

QuantizedClip decode(std::span<const TokenQuad> tokens, int ticks_per_slot) {
  QuantizedClip clip;
  clip.ticks_per_slot = ticks_per_slot;
  if (tokens.empty()) return clip;
  if (tokens.front().event.kind != EventKind::Bom) {
    throw CodecError("decode: token 0 must be BOM");
  }
  SlotEvent* open = nullptr;
  bool chord_allowed = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const auto where = " at token " + std::to_string(i);
    switch (t.event.kind) {
      case EventKind::Bom:
        clip.measures.emplace_back();
        open = nullptr;
        break;
      case EventKind::Position: {
        if (t.event.value < 0 || t.event.value >= kSlotsPerMeasure) {
          throw CodecError("decode: position out of range" + where);
        }
        auto& events = clip.measures.back().events;
        events.push_back({t.event.value, std::nullopt, {}});
        open = &events.back();
        chord_allowed = true;
        break;
      }
      case EventKind::Chord:
        if (open == nullptr || !chord_allowed) throw CodecError("decode: Chord not directly after Position" + where);
        open->chord = t.event.value;
        chord_allowed = false;
        break;
      case EventKind::Pitch:
        if (open == nullptr) throw CodecError("decode: Pitch before any Position" + where);
        if (!t.duration || !t.track || !t.instrument) {
          throw CodecError("decode: Pitch without duration/track/instrument" + where);
        }
        open->notes.push_back({t.event.value, *t.track, *t.instrument, *t.duration});
        chord_allowed = false;
        break;
    }
  }
  canonicalize(clip);
  return clip;
}

void renumber_groups(std::vector<TokenQuad>& tokens) {
  int group = 0;
  for (auto& t : tokens) {
    if (t.event.kind == EventKind::Position) ++group;
    t.pos_group = group;
  }
}

IdSequence to_ids(std::span<const TokenQuad> tokens, const Vocab& vocab, bool add_bos_eos) {
  IdSequence seq;
  seq.ids.reserve(tokens.size() + 2);
  if (add_bos_eos) {
    seq.ids.push_back({kBos, kBos, kBos, kBos});
    seq.pos_group.push_back(tokens.empty() ? 0 : tokens.front().pos_group);
  }
  for (const auto& t : tokens) {
    seq.ids.push_back({vocab.id_of_event(t.event), vocab.id_of(Field::Duration, t.duration),
                       vocab.id_of(Field::Track, t.track), vocab.id_of(Field::Instrument, t.instrument)});
    seq.pos_group.push_back(t.pos_group);
  }
  if (add_bos_eos) {
    seq.ids.push_back({kEos, kEos, kEos, kEos});
    seq.pos_group.push_back(seq.pos_group.back() + 1);
  }
  return seq;
}

std::vector<TokenQuad> from_ids(const IdSequence& seq, const Vocab& vocab) {
  std::vector<TokenQuad> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int ev = seq.at(i, Field::Event);
    if (ev == kBos || ev == kEos || ev == kPad) continue;
    TokenQuad t;
    t.event = vocab.event_at(ev);
    t.pos_group = seq.pos_group[i];
    if (t.event.kind == EventKind::Pitch) {
      t.duration = vocab.value_at(Field::Duration, seq.at(i, Field::Duration));
      t.track = vocab.value_at(Field::Track, seq.at(i, Field::Track));
      t.instrument = vocab.value_at(Field::Instrument, seq.at(i, Field::Instrument));
    }
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// text form

void write_tokens(std::ostream& out, const TokenFile& file) {
  out << "# event\tduration\ttrack\tinstrument\tpos_group\n";
  out << "# ticks_per_slot: " << file.ticks_per_slot << '\n';
  out << "# bpm: " << file.bpm << '\n';
  for (const auto& t : file.tokens) {
    out << to_string(t.event) << '\t' << opt_str(t.duration) << '\t' << opt_str(t.track) << '\t'
        << opt_str(t.instrument) << '\t' << t.pos_group << '\n';
  }
}

TokenFile read_tokens(std::istream& in) {
  TokenFile file;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream c(line.substr(1));
      std::string key;
      c >> key;
      if (key == "ticks_per_slot:") c >> file.ticks_per_slot;
      if (key == "bpm:") c >> file.bpm;
      continue;
    }
    std::vector<std::string> cols;
    std::istringstream row(line);
    std::string col;
    while (std::getline(row, col, '\t')) cols.push_back(col);
    if (cols.size() != 5) {
      throw CodecError("token text line " + std::to_string(lineno) + ": expected 5 tab-separated fields");
    }
    TokenQuad t;
    t.event = parse_event(cols[0]);
    t.duration = parse_opt(cols[1], lineno);
    t.track = parse_opt(cols[2], lineno);
    t.instrument = parse_opt(cols[3], lineno);
    const auto g = parse_opt(cols[4], lineno);
    if (!g) throw CodecError("token text line " + std::to_string(lineno) + ": pos_group required");
    t.pos_group = *g;
    file.tokens.push_back(t);
  }
  return file;
}

}  // namespace stepscore::codec
