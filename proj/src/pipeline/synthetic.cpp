#include "stepscore/pipeline/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

#include "stepscore/codec/smf.hpp"

namespace stepscore::pipeline {

namespace {

constexpr int kJoints = 7;
// rest pose: pelvis, chest, head, left/right hand, left/right foot
constexpr double kRest[kJoints][3] = {{0.0, 0.0, 0.0},  {0.0, 0.5, 0.0},   {0.0, 0.8, 0.0},  {-0.4, 0.4, 0.0},
                                      {0.4, 0.4, 0.0},  {-0.15, -0.8, 0.0}, {0.15, -0.8, 0.0}};

// Both waves have their extremes (direction reversals) exactly on beats.
double smooth_wave(double phase) { return std::cos(std::numbers::pi * phase); }

double triangle_wave(double phase) {
  const double u = phase - 2.0 * std::floor(phase / 2.0);  // [0, 2)
  return u <= 1.0 ? 1.0 - 2.0 * u : -3.0 + 2.0 * u;
}

}  // namespace

std::vector<motion::Edge> synthetic_edges() { return {{0, 1}, {1, 2}, {1, 3}, {1, 4}, {0, 5}, {0, 6}}; }

SyntheticClip make_synthetic_clip(const SyntheticSpec& spec, int index) {
  if (spec.beat_period < 2) throw std::invalid_argument("synthetic: beat period must be at least 2 frames");
  if (spec.genres.empty()) throw std::invalid_argument("synthetic: no genres");
  // one generator per clip so clips do not depend on how many precede them
  tensor::Rng rng(spec.seed * 1000003ULL + static_cast<std::uint64_t>(index));
  std::uniform_int_distribution<int> phase_pick(0, spec.beat_period - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> amplitude(0.1, 0.25);
  std::normal_distribution<double> jitter(0.0, 0.01);

  SyntheticClip clip;
  char name[32];
  std::snprintf(name, sizeof name, "clip%04d", index);
  clip.id = name;
  const auto genre_index = static_cast<std::size_t>(index) % spec.genres.size();
  const bool jerky = genre_index % 2 == 1;
  const int phase = spec.random_phase ? phase_pick(rng) : 0;

  auto& s = clip.skeleton;
  s.fps = spec.fps;
  s.joints = kJoints;
  s.genre = spec.genres[genre_index];
  s.edges = synthetic_edges();
  s.root = 0;
  for (int b = phase; b < spec.frames; b += spec.beat_period) s.beat_frames.push_back(b);

  // each moving joint swings along its own direction
  Eigen::Matrix<double, kJoints, 3> direction;
  Eigen::Matrix<double, kJoints, 1> amp;
  for (int j = 0; j < kJoints; ++j) {
    Eigen::RowVector3d d(unit(rng), unit(rng), unit(rng));
    if (d.norm() < 1e-3) d = Eigen::RowVector3d(1, 0, 0);
    direction.row(j) = d.normalized();
    amp(j) = j == 0 ? 0.0 : amplitude(rng);
  }
  const Eigen::RowVector3d drift(unit(rng) * 0.01, 0.0, unit(rng) * 0.01);

  s.frames.resize(static_cast<Eigen::Index>(spec.frames) * kJoints, 3);
  for (int t = 0; t < spec.frames; ++t) {
    const double p = static_cast<double>(t - phase) / spec.beat_period;
    const double w = jerky ? triangle_wave(p) : smooth_wave(p);
    const Eigen::RowVector3d root = drift * t;
    for (int j = 0; j < kJoints; ++j) {
      Eigen::RowVector3d pos(kRest[j][0], kRest[j][1], kRest[j][2]);
      pos += root + amp(j) * w * direction.row(j);
      if (jerky && j != 0) pos += Eigen::RowVector3d(jitter(rng), jitter(rng), jitter(rng));
      s.frames.row(static_cast<Eigen::Index>(t) * kJoints + j) = pos;
    }
  }

  // music: beat frame b → tick b·(ticks per frame)
  const double ticks_per_frame = spec.ticks_per_quarter * spec.bpm / 60.0 / spec.fps;
  const int ticks_per_slot = spec.ticks_per_quarter / 16;
  for (std::size_t k = 0; k < s.beat_frames.size(); ++k) {
    const auto tick = static_cast<std::int64_t>(std::llround(s.beat_frames[k] * ticks_per_frame));
    const int drum = k % 2 == 0 ? 36 : 38;
    clip.notes.push_back({0, tick, drum, ticks_per_slot, codec::kDrumInstrument, 100});
    clip.notes.push_back({1, tick + spec.echo_delay_slots * ticks_per_slot, drum + spec.echo_transpose,
                          spec.echo_duration, spec.echo_program, 80});
  }
  codec::sort_canonical(clip.notes);
  return clip;
}

std::vector<SyntheticClip> make_synthetic(const SyntheticSpec& spec) {
  std::vector<SyntheticClip> out;
  out.reserve(static_cast<std::size_t>(spec.clips));
  for (int i = 0; i < spec.clips; ++i) out.push_back(make_synthetic_clip(spec, i));
  return out;
}

std::vector<std::string> write_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> ids;
  for (const auto& clip : make_synthetic(spec)) {
    motion::write_skeleton(dir / (clip.id + ".json"), clip.skeleton);
    codec::write_smf_file(dir / (clip.id + ".mid"), clip.notes, spec.bpm);
    ids.push_back(clip.id);
  }
  return ids;
}

}  // namespace stepscore::pipeline
