#include "stepscore/codec/quantize.hpp"

#include <algorithm>
#include <array>
#include <map>

namespace stepscore::codec {

std::size_t QuantizedClip::note_count() const {
  std::size_t n = 0;
  for (const auto& m : measures)
    for (const auto& e : m.events) n += e.notes.size();
  return n;
}

std::optional<int> detect_chord(std::span<const SlotNote> notes) {
  std::array<bool, 12> present{};
  int lowest = 128;
  for (const auto& n : notes) {
    if (n.instrument == kDrumInstrument) continue;
    present[n.pitch % 12] = true;
    lowest = std::min(lowest, n.pitch);
  }
  if (lowest == 128) return std::nullopt;

  std::optional<int> best;
  for (int id = 0; id < kChordCount; ++id) {
    const int root = id % 12;
    const int third = id < 12 ? 4 : 3;
    if (!present[root] || !present[(root + third) % 12] || !present[(root + 7) % 12]) continue;
    if (root == lowest % 12) return id;
    if (!best) best = id;
  }
  return best;
}

void assign_chords(QuantizedClip& clip) {
  for (auto& m : clip.measures)
    for (auto& e : m.events) e.chord = detect_chord(e.notes);
}

std::string chord_name(int chord_id) {
  static constexpr std::array<const char*, 12> kRoots{"C", "C#", "D", "D#", "E", "F",
                                                      "F#", "G", "G#", "A", "A#", "B"};
  if (chord_id < 0 || chord_id >= kChordCount) return "?";
  return std::string(kRoots[chord_id % 12]) + (chord_id < 12 ? "" : "m");
}

void canonicalize(QuantizedClip& clip) {
  for (auto& m : clip.measures) {
    std::map<int, SlotEvent> by_slot;
    for (auto& e : m.events) {
      auto [it, fresh] = by_slot.try_emplace(e.slot, SlotEvent{e.slot, e.chord, {}});
      if (!it->second.chord) it->second.chord = e.chord;
      it->second.notes.insert(it->second.notes.end(), e.notes.begin(), e.notes.end());
    }
    m.events.clear();
    for (auto& [slot, e] : by_slot) {
      if (e.notes.empty()) continue;
      std::sort(e.notes.begin(), e.notes.end());
      m.events.push_back(std::move(e));
    }
  }
}

QuantizedClip quantize(std::span<const Note> notes, int ticks_per_slot, int min_measures) {
  if (ticks_per_slot <= 0) throw CodecError("quantize: ticks_per_slot must be positive");
  QuantizedClip clip;
  clip.ticks_per_slot = ticks_per_slot;
  const std::int64_t tps = ticks_per_slot;
  std::map<std::int64_t, std::vector<SlotNote>> slots;
  for (const auto& n : notes) {
    validate(n);
    const std::int64_t slot = (2 * n.onset + tps) / (2 * tps);
    const std::int64_t dur = std::clamp<std::int64_t>((2 * n.duration + tps) / (2 * tps), 1,
                                                      kDurationClasses);
    slots[slot].push_back({n.pitch, n.track, n.instrument, static_cast<int>(dur)});
  }
  std::int64_t measures = min_measures;
  if (!slots.empty()) measures = std::max<std::int64_t>(measures, slots.rbegin()->first / kSlotsPerMeasure + 1);
  clip.measures.resize(static_cast<std::size_t>(measures));
  for (auto& [slot, group] : slots) {
    std::sort(group.begin(), group.end());
    auto& m = clip.measures[static_cast<std::size_t>(slot / kSlotsPerMeasure)];
    SlotEvent e{static_cast<int>(slot % kSlotsPerMeasure), std::nullopt, std::move(group)};
    e.chord = detect_chord(e.notes);
    m.events.push_back(std::move(e));
  }
  return clip;
}

std::vector<Note> dequantize(const QuantizedClip& clip, int velocity) {
  std::vector<Note> out;
  const std::int64_t tps = clip.ticks_per_slot;
  for (std::size_t mi = 0; mi < clip.measures.size(); ++mi) {
    for (const auto& e : clip.measures[mi].events) {
      const std::int64_t onset = (static_cast<std::int64_t>(mi) * kSlotsPerMeasure + e.slot) * tps;
      for (const auto& n : e.notes) {
        out.push_back({n.track, onset, n.pitch, n.duration * tps, n.instrument, velocity});
      }
    }
  }
  sort_canonical(out);
  return out;
}

}  // namespace stepscore::codec
