#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stepscore/codec/note.hpp"

namespace stepscore::codec {

inline constexpr int kWriteTicksPerQuarter = 480;
inline constexpr double kDefaultBpm = 120.0;

struct TempoChange {
  std::int64_t tick = 0;
  int us_per_quarter = 500000;
};

/// Result of reading a Standard MIDI File.
///
/// Type-1 files map each MTrk chunk to one track index (chunk order); type-0
/// files map each channel to its own track. Channel 10 is always read as the
/// drum instrument.
struct SmfData {
  int format = 1;
  int ticks_per_quarter = kWriteTicksPerQuarter;
  std::vector<Note> notes;  // canonical order
  std::vector<TempoChange> tempo;
  std::int64_t end_tick = 0;
  int dangling_notes = 0;  // note-ons with no matching note-off, clamped to end_tick

  double seconds_at(std::int64_t tick) const;
  /// Tempo in effect at tick 0, or 120 bpm when the file carries none.
  double initial_bpm() const;
};

SmfData parse_smf(std::span<const std::uint8_t> bytes);
SmfData read_smf_file(const std::filesystem::path& path);

/// Emits a type-1 file at 480 ticks per quarter with one tempo event.
///
/// Track t is written to MTrk chunk t. Each (track, instrument) pair gets its
/// own channel; with more than 15 melodic pairs channels are shared and a
/// warning is appended. Notes that overlap at the same pitch within one
/// (track, instrument) cannot survive the first-in-first-out note-off pairing
/// and are not representable.
std::vector<std::uint8_t> write_smf(std::span<const Note> notes, double bpm = kDefaultBpm,
                                    std::vector<std::string>* warnings = nullptr);
void write_smf_file(const std::filesystem::path& path, std::span<const Note> notes,
                    double bpm = kDefaultBpm, std::vector<std::string>* warnings = nullptr);

std::vector<std::uint8_t> read_binary(const std::filesystem::path& path);
void write_binary(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace stepscore::codec
