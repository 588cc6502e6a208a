#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stepscore/bert/bertgen.hpp"
#include "stepscore/codec/smf.hpp"
#include "stepscore/drum/decoder.hpp"
#include "stepscore/motion/encoder.hpp"
#include "stepscore/pipeline/config.hpp"
#include "stepscore/pipeline/corpus.hpp"
#include "stepscore/pipeline/synthetic.hpp"
#include "stepscore/tensor/checkpoint.hpp"

namespace stepscore::pipeline {

using tensor::Matrix;
using tensor::ParamStore;
using tensor::Rng;

/// A manifest record with its files read.
struct LoadedClip {
  ClipRecord record;
  motion::Skeleton skeleton;
  codec::SmfData midi;
};

LoadedClip load_clip(const std::filesystem::path& manifest_path, const ClipRecord& record);
std::vector<LoadedClip> load_split(const std::filesystem::path& manifest_path, const CorpusManifest& manifest,
                                   Split split);

/// One training window: the frames, the beats inside it and the music
/// under it, re-based to start at tick 0.
struct Sample {
  std::string id;
  std::string genre;
  Matrix frames;  // (T·J)×3
  int root = 0;
  motion::MotionGraph graph;
  std::vector<int> beat_frames;
  codec::QuantizedClip music;  // every track
};

/// Cuts a clip into windows of `window` frames every `stride` frames. Beats
/// come from the skeleton annotation, or from the MIDI when it has none.
std::vector<Sample> make_samples(const LoadedClip& clip, const Config& config,
                                 std::vector<std::string>* warnings = nullptr);
/// The same for an in-memory synthetic clip.
std::vector<Sample> make_samples(const SyntheticClip& clip, const Config& config,
                                 std::vector<std::string>* warnings = nullptr);

/// Measures of 4/4 needed to cover `frames` at `fps` and `bpm`.
int measures_for(int frames, double fps, double bpm);

motion::StyleConfig style_config(const Config& config, int genres);
motion::ContextConfig context_config(const Config& config, int genres);
drum::DrumConfig drum_config(const Config& config);
bert::BertConfig bert_config(const Config& config);
tensor::AdamConfig adam_config(const Config& config);

/// Where per-step losses go. `csv` gets a header and one row per step;
/// `progress` gets a line every `every` steps.
struct TrainLog {
  std::ostream* csv = nullptr;
  std::ostream* progress = nullptr;
  int every = 500;
};

/// Pretrained genre classifier.
struct StyleSystem {
  Config config;
  std::vector<std::string> genres;
  ParamStore store;
  motion::StyleBranch branch;

  int genre_index(const std::string& genre) const;
  std::map<std::string, std::string> meta() const;
};

/// Context encoder plus drum decoder.
struct DrumSystem {
  Config config;
  std::vector<std::string> genres;
  codec::Vocab vocab;
  int drum_track = 0;
  ParamStore store;
  drum::DrumModel model;

  std::map<std::string, std::string> meta() const;
};

/// Masked model for the remaining tracks, with the scaffold statistics of
/// its training data.
struct BertSystem {
  Config config;
  codec::Vocab vocab;
  bert::ScaffoldStats scaffolds;
  ParamStore store;
  bert::BertGen model;

  std::map<std::string, std::string> meta() const;
};

std::unique_ptr<StyleSystem> build_style(const Config& config, const std::vector<std::string>& genres);
std::unique_ptr<DrumSystem> build_drum(const Config& config, const std::vector<std::string>& genres,
                                       const codec::Vocab& vocab, int drum_track);
std::unique_ptr<BertSystem> build_bert(const Config& config, const codec::Vocab& vocab,
                                       const bert::ScaffoldStats& scaffolds);

/// Training draws samples in a fresh seeded shuffle every pass. The seed is
/// the config's `seed`; initialisation and data order use separate streams.
std::unique_ptr<StyleSystem> train_style(const Config& config, const std::vector<Sample>& train, TrainLog log = {});
/// With `style`, its weights are copied in and stay frozen; without it the
/// style branch keeps its random initialisation (also frozen).
std::unique_ptr<DrumSystem> train_drum(const Config& config, const std::vector<Sample>& train,
                                       const StyleSystem* style, TrainLog log = {},
                                       std::vector<std::string>* warnings = nullptr);
std::unique_ptr<BertSystem> train_bert(const Config& config, const std::vector<Sample>& train, TrainLog log = {},
                                       std::vector<std::string>* warnings = nullptr);

/// Checkpoint meta carries "kind", "config" and the model-specific tables,
/// so loading needs nothing but the file.
void save(const std::filesystem::path& path, const StyleSystem& system);
void save(const std::filesystem::path& path, const DrumSystem& system);
void save(const std::filesystem::path& path, const BertSystem& system);
std::string checkpoint_kind(const tensor::Checkpoint& ckpt);
std::unique_ptr<StyleSystem> load_style(const std::filesystem::path& path);
std::unique_ptr<DrumSystem> load_drum(const std::filesystem::path& path);
std::unique_ptr<BertSystem> load_bert(const std::filesystem::path& path);

int predict_genre(const StyleSystem& system, const Matrix& frames, const motion::MotionGraph& graph, int root);

struct DrumOutput {
  std::vector<codec::Note> notes;  // at codec::kWriteTicksPerQuarter
  std::vector<codec::TokenQuad> tokens;
  std::vector<int> beat_frames;  // thresholded beat head
};

/// Drum track for a skeleton, as many measures as its frames cover. The
/// sampler comes from `options` (generate.temperature, generate.top_k).
DrumOutput generate_drums(const DrumSystem& system, const motion::Skeleton& skeleton, const Config& options,
                          std::uint64_t seed);

/// Adds the remaining tracks to the drums of `drums`. Without `scaffold` one
/// is drawn from the training statistics. Sampler from complete.*. Notes
/// come back at codec::kWriteTicksPerQuarter.
std::vector<codec::Note> complete_music(const BertSystem& system, const codec::SmfData& drums, const Config& options,
                                        std::uint64_t seed, const bert::Scaffold* scaffold = nullptr);

}  // namespace stepscore::pipeline
