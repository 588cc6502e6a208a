#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stepscore/codec/quantize.hpp"

namespace stepscore::codec {

enum class EventKind : std::uint8_t { Bom, Chord, Position, Pitch };

struct Event {
  EventKind kind = EventKind::Bom;
  int value = 0;

  auto operator<=>(const Event&) const = default;
};

inline Event bom() { return {EventKind::Bom, 0}; }
inline Event chord(int id) { return {EventKind::Chord, id}; }
inline Event position(int slot) { return {EventKind::Position, slot}; }
inline Event pitch(int p) { return {EventKind::Pitch, p}; }

std::string to_string(const Event& e);
Event parse_event(const std::string& text);

/// One element of the quad sequence. Structural events (BOM, Chord,
/// Position) leave duration, track and instrument empty; Pitch events carry
/// all three. pos_group counts Position tokens seen so far.
struct TokenQuad {
  Event event;
  std::optional<int> duration;
  std::optional<int> track;
  std::optional<int> instrument;
  int pos_group = 0;

  bool operator==(const TokenQuad&) const = default;
};

enum class Field : int { Event = 0, Duration = 1, Track = 2, Instrument = 3 };
inline constexpr int kFieldCount = 4;
inline constexpr std::array<Field, kFieldCount> kFields{Field::Event, Field::Duration, Field::Track,
                                                       Field::Instrument};
const char* field_name(Field f);

/// Reserved ids shared by every field table; content ids start at kFirstContent.
inline constexpr int kPad = 0;
inline constexpr int kMask = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr int kNone = 4;
inline constexpr int kFirstContent = 5;

/// The instrument set of the paired corpus: 12 general-MIDI programs plus drums.
inline constexpr std::array<int, 13> kCorpusInstruments{0,  8,  16, 24, 32, 40, 48,
                                                        62, 64, 72, 80, 88, kDrumInstrument};

/// Per-field token tables with dense ids.
class Vocab {
 public:
  Vocab() = default;

  /// Deterministic: tables are sorted by value, so corpus order never matters.
  /// The instrument table always covers kCorpusInstruments.
  static Vocab build(std::span<const std::vector<TokenQuad>> corpus);

  int size(Field f) const { return kFirstContent + content_size(f); }
  int content_size(Field f) const;

  std::optional<int> find_event(const Event& e) const;
  std::optional<int> find(Field f, int value) const;  // non-event fields
  /// Throws CodecError naming the field and value when absent.
  int id_of_event(const Event& e) const;
  int id_of(Field f, std::optional<int> value) const;

  const Event& event_at(int id) const;
  int value_at(Field f, int id) const;
  const std::vector<Event>& events() const { return events_; }
  const std::vector<int>& values(Field f) const;

  std::string serialize() const;
  static Vocab deserialize(const std::string& text);

  bool operator==(const Vocab&) const = default;

 private:
  std::vector<Event> events_;
  std::array<std::vector<int>, 3> values_;  // duration, track, instrument
};

/// A quad sequence as per-field ids, ready for the networks.
struct IdSequence {
  std::vector<std::array<int, kFieldCount>> ids;
  std::vector<int> pos_group;

  std::size_t size() const { return ids.size(); }
  int at(std::size_t i, Field f) const { return ids[i][static_cast<int>(f)]; }
};

/// Canonical encoding: per measure a BOM, then per occupied slot a Position,
/// the chord if any, then one Pitch per note in canonical order.
std::vector<TokenQuad> encode(const QuantizedClip& clip);
/// Same, but every value must exist in the vocabulary.
std::vector<TokenQuad> encode(const QuantizedClip& clip, const Vocab& vocab);

/// Rebuilds a clip. Slots that appear more than once in a measure are merged
/// and notes are re-sorted, so decode does not depend on in-slot order.
QuantizedClip decode(std::span<const TokenQuad> tokens, int ticks_per_slot);

/// Rewrites pos_group so it counts Position tokens from zero.
void renumber_groups(std::vector<TokenQuad>& tokens);

IdSequence to_ids(std::span<const TokenQuad> tokens, const Vocab& vocab, bool add_bos_eos = false);
/// BOS/EOS/PAD entries are skipped; MASK or NONE in a required slot is an error.
std::vector<TokenQuad> from_ids(const IdSequence& seq, const Vocab& vocab);

/// Text form: `event<TAB>duration<TAB>track<TAB>instrument<TAB>pos_group`, one
/// quad per line, `-` for an empty field, `#` starts a comment. Comments of
/// the form `# key: value` carry ticks_per_slot and bpm.
struct TokenFile {
  std::vector<TokenQuad> tokens;
  int ticks_per_slot = 30;
  double bpm = 120.0;
};
void write_tokens(std::ostream& out, const TokenFile& file);
TokenFile read_tokens(std::istream& in);

}  // namespace stepscore::codec
