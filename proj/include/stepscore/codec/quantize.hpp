#pragma once

#include <compare>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepscore/codec/note.hpp"

namespace stepscore::codec {

/// 4/4 measures divided into 64 position slots (sixty-fourth notes).
inline constexpr int kSlotsPerMeasure = 64;
/// Duration classes are 1..32 slots; longer notes are clamped.
inline constexpr int kDurationClasses = 32;
/// Chord ids 0..11 are major triads rooted on C..B, 12..23 the minor ones.
inline constexpr int kChordCount = 24;

/// A note inside a slot. Field order is the canonical in-slot order.
struct SlotNote {
  int pitch = 60;
  int track = 0;
  int instrument = 0;
  int duration = 1;  // duration class in slots, 1..kDurationClasses

  auto operator<=>(const SlotNote&) const = default;
};

struct SlotEvent {
  int slot = 0;
  std::optional<int> chord;
  std::vector<SlotNote> notes;  // non-empty, canonical order

  bool operator==(const SlotEvent&) const = default;
};

struct Measure {
  std::vector<SlotEvent> events;  // ascending slot, no duplicates

  bool operator==(const Measure&) const = default;
};

struct QuantizedClip {
  std::vector<Measure> measures;
  int ticks_per_slot = 30;

  bool operator==(const QuantizedClip&) const = default;
  std::size_t note_count() const;
};

/// Ticks per slot for a file resolution: a quarter note spans 16 slots.
constexpr int ticks_per_slot_for(int ticks_per_quarter) { return ticks_per_quarter / 16; }

/// Snaps onsets to the nearest slot (ties round up) and durations to the
/// nearest class. Measures run up to the last onset, or `min_measures` if
/// that is larger. Chords are filled in by template matching.
QuantizedClip quantize(std::span<const Note> notes, int ticks_per_slot, int min_measures = 0);

/// Inverse of quantize up to the grid: onsets and durations become exact
/// multiples of ticks_per_slot.
std::vector<Note> dequantize(const QuantizedClip& clip, int velocity = 100);

/// Template match of the melodic pitches against the 24 major/minor triads.
/// Drums never contribute. When several triads match, the one rooted on the
/// lowest sounding pitch class wins, then the lowest chord id.
std::optional<int> detect_chord(std::span<const SlotNote> notes);

/// Recomputes every slot's chord from its notes.
void assign_chords(QuantizedClip& clip);

std::string chord_name(int chord_id);

/// Brings a clip into canonical form: slot events sorted and merged per
/// slot, notes sorted inside each slot, empty events dropped.
void canonicalize(QuantizedClip& clip);

}  // namespace stepscore::codec
