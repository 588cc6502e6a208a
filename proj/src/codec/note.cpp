#include "stepscore/codec/note.hpp"

#include <algorithm>

namespace stepscore::codec {

void validate(const Note& note) {
  if (note.pitch < 0 || note.pitch > 127) {
    throw CodecError("note pitch out of range: " + std::to_string(note.pitch));
  }
  if (note.duration < 1) {
    throw CodecError("note duration must be >= 1 tick, got " + std::to_string(note.duration));
  }
  if (note.onset < 0) {
    throw CodecError("note onset must be non-negative, got " + std::to_string(note.onset));
  }
  if (note.instrument < 0 || note.instrument > kDrumInstrument) {
    throw CodecError("note instrument out of range: " + std::to_string(note.instrument));
  }
  if (note.velocity < 1 || note.velocity > 127) {
    throw CodecError("note velocity out of range: " + std::to_string(note.velocity));
  }
  if (note.track < 0) {
    throw CodecError("note track must be non-negative");
  }
}

void sort_canonical(std::vector<Note>& notes) { std::sort(notes.begin(), notes.end()); }

std::vector<Note> select_drums(std::span<const Note> notes) {
  std::vector<Note> out;
  std::copy_if(notes.begin(), notes.end(), std::back_inserter(out),
               [](const Note& n) { return n.is_drum(); });
  return out;
}

std::vector<Note> select_non_drums(std::span<const Note> notes) {
  std::vector<Note> out;
  std::copy_if(notes.begin(), notes.end(), std::back_inserter(out),
               [](const Note& n) { return !n.is_drum(); });
  return out;
}

}  // namespace stepscore::codec
