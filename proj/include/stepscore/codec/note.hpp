#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stepscore::codec {

/// Percussion is carried as a pseudo-program just past the general-MIDI range.
inline constexpr int kDrumInstrument = 128;
inline constexpr int kDrumChannel = 9;

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One pitched or percussive event. Field order defines the canonical sort:
/// by track, then onset, then pitch.
struct Note {
  int track = 0;
  std::int64_t onset = 0;     // ticks from clip start
  int pitch = 60;             // GM pitch, or GM percussion key for drums
  std::int64_t duration = 1;  // ticks
  int instrument = 0;         // GM program 0..127 or kDrumInstrument
  int velocity = 100;

  bool is_drum() const { return instrument == kDrumInstrument; }
  auto operator<=>(const Note&) const = default;
};

/// Throws CodecError when a note breaks the range invariants.
void validate(const Note& note);

void sort_canonical(std::vector<Note>& notes);

/// Notes of one instrument on one track; empty when none match.
std::vector<Note> select_drums(std::span<const Note> notes);
std::vector<Note> select_non_drums(std::span<const Note> notes);

}  // namespace stepscore::codec
