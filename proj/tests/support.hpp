#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "stepscore/codec/note.hpp"
#include "stepscore/codec/quantize.hpp"

namespace testing {

using stepscore::codec::Note;

/// Random valid notes: no two notes of the same pitch overlap within one
/// (track, instrument), every field inside its range.
inline std::vector<Note> random_notes(std::mt19937_64& rng, int count, int tracks = 4) {
  std::uniform_int_distribution<int> track(0, tracks - 1);
  std::uniform_int_distribution<int> pitch(21, 108);
  std::uniform_int_distribution<std::int64_t> onset(0, 480 * 32);
  std::uniform_int_distribution<std::int64_t> duration(1, 960);
  std::uniform_int_distribution<int> velocity(1, 127);
  std::uniform_int_distribution<int> instrument_pick(0, 4);
  static constexpr int kInstruments[] = {0, 32, 40, 48, stepscore::codec::kDrumInstrument};

  std::map<std::tuple<int, int, int>, std::vector<std::pair<std::int64_t, std::int64_t>>> busy;
  std::vector<Note> out;
  while (static_cast<int>(out.size()) < count) {
    Note n;
    n.track = track(rng);
    n.instrument = kInstruments[instrument_pick(rng)];
    n.pitch = pitch(rng);
    n.onset = onset(rng);
    n.duration = duration(rng);
    n.velocity = velocity(rng);
    auto& spans = busy[{n.track, n.instrument, n.pitch}];
    const bool clash = std::any_of(spans.begin(), spans.end(), [&](const auto& s) {
      return n.onset < s.second && s.first < n.onset + n.duration;
    });
    if (clash) continue;
    spans.emplace_back(n.onset, n.onset + n.duration);
    out.push_back(n);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Random canonical clip with arbitrary chord labels.
inline stepscore::codec::QuantizedClip random_clip(std::mt19937_64& rng, int max_measures = 4) {
  using namespace stepscore::codec;
  std::uniform_int_distribution<int> measures(1, max_measures);
  std::uniform_int_distribution<int> slots(0, 8);
  std::uniform_int_distribution<int> slot(0, kSlotsPerMeasure - 1);
  std::uniform_int_distribution<int> notes(1, 4);
  std::uniform_int_distribution<int> pitch(30, 90);
  std::uniform_int_distribution<int> dur(1, kDurationClasses);
  std::uniform_int_distribution<int> track(0, 3);
  std::uniform_int_distribution<int> chord_pick(-1, kChordCount - 1);
  static constexpr int kInstruments[] = {0, 32, 40, kDrumInstrument};

  QuantizedClip clip;
  clip.ticks_per_slot = 30;
  clip.measures.resize(static_cast<std::size_t>(measures(rng)));
  for (auto& m : clip.measures) {
    const int n = slots(rng);
    std::vector<int> picked;
    for (int i = 0; i < n; ++i) picked.push_back(slot(rng));
    std::sort(picked.begin(), picked.end());
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
    for (int s : picked) {
      SlotEvent e;
      e.slot = s;
      const int c = chord_pick(rng);
      if (c >= 0) e.chord = c;
      const int k = notes(rng);
      for (int i = 0; i < k; ++i) {
        const int t = track(rng);
        e.notes.push_back({pitch(rng), t, kInstruments[t], dur(rng)});
      }
      std::sort(e.notes.begin(), e.notes.end());
      m.events.push_back(std::move(e));
    }
  }
  return clip;
}

}  // namespace testing
