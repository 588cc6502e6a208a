#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stepscore/codec/note.hpp"
#include "stepscore/motion/skeleton.hpp"

namespace stepscore::pipeline {

/// Paired toy corpus: skeletons whose joints reverse direction on every beat,
/// with a drum hit on each beat and a second track echoing the drum one slot
/// later, an octave up.
struct SyntheticSpec {
  int clips = 40;
  int frames = 80;
  int beat_period = 10;  // frames
  double fps = 20.0;
  double bpm = 120.0;
  int ticks_per_quarter = 480;
  bool random_phase = true;
  std::vector<std::string> genres{"smooth", "jerky"};
  int echo_delay_slots = 1;
  int echo_program = 32;
  int echo_transpose = 12;
  int echo_duration = 120;  // ticks
  std::uint64_t seed = 1;
};

struct SyntheticClip {
  std::string id;
  motion::Skeleton skeleton;
  std::vector<codec::Note> notes;
};

/// The 7-joint toy skeleton: pelvis, chest, head, two hands, two feet.
std::vector<motion::Edge> synthetic_edges();

SyntheticClip make_synthetic_clip(const SyntheticSpec& spec, int index);
std::vector<SyntheticClip> make_synthetic(const SyntheticSpec& spec);

/// Writes <id>.json and <id>.mid for every clip and returns their ids.
std::vector<std::string> write_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

}  // namespace stepscore::pipeline
