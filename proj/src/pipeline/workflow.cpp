#include "stepscore/pipeline/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "stepscore/metrics/metrics.hpp"
#include "stepscore/motion/train.hpp"

namespace stepscore::pipeline {

namespace fs = std::filesystem;
using codec::Note;
using codec::QuantizedClip;
using codec::SmfData;
using codec::Vocab;

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(part);
  return out;
}

// First tick at or after `seconds` under the file's tempo map.
std::int64_t tick_at(const SmfData& midi, double seconds) {
  std::int64_t last_tick = 0;
  double last_seconds = 0.0;
  int us = 500000;
  for (const auto& t : midi.tempo) {
    const double at = midi.seconds_at(t.tick);
    if (at >= seconds) break;
    last_tick = t.tick;
    last_seconds = at;
    us = t.us_per_quarter;
  }
  const double ticks = (seconds - last_seconds) * 1e6 * midi.ticks_per_quarter / us;
  return last_tick + static_cast<std::int64_t>(std::llround(ticks));
}

std::vector<int> beats_from_midi(const SmfData& midi, double fps) {
  std::vector<int> out;
  for (double s : metrics::detect_beats(midi.notes, midi)) out.push_back(static_cast<int>(std::lround(s * fps)));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Sample> cut(const std::string& id, const std::string& genre, const motion::Skeleton& skeleton,
                        const SmfData& midi, const Config& config, std::vector<std::string>* warnings) {
  const int window = config.integer("window");
  const int stride = config.integer("stride");
  const double fps = skeleton.fps;
  std::vector<std::string> local;
  const auto windows = sliding_window(skeleton.frame_count(), window, stride, &local);
  if (warnings)
    for (const auto& w : local) warnings->push_back(id + ": " + w);
  const std::vector<int> beats = skeleton.beat_frames.empty() ? beats_from_midi(midi, fps) : skeleton.beat_frames;
  const auto graph = motion::MotionGraph::of(skeleton);
  const int tps = codec::ticks_per_slot_for(midi.ticks_per_quarter);
  const int measures = measures_for(window, fps, midi.initial_bpm());

  std::vector<Sample> out;
  for (const auto& [start, end] : windows) {
    Sample s;
    s.id = windows.size() == 1 ? id : id + "@" + std::to_string(start);
    s.genre = genre;
    s.frames = skeleton.frames.middleRows(static_cast<Eigen::Index>(start) * skeleton.joints,
                                          static_cast<Eigen::Index>(end - start) * skeleton.joints);
    s.root = skeleton.root;
    s.graph = graph;
    for (int b : beats)
      if (b >= start && b < end) s.beat_frames.push_back(b - start);
    const std::int64_t t0 = tick_at(midi, start / fps);
    const std::int64_t t1 = tick_at(midi, end / fps);
    std::vector<Note> notes;
    for (const auto& n : midi.notes)
      if (n.onset >= t0 && n.onset < t1) {
        Note m = n;
        m.onset -= t0;
        notes.push_back(m);
      }
    s.music = codec::quantize(notes, tps);
    // keep trailing empty measures out of the target; short windows still get one
    if (s.music.measures.empty()) s.music.measures.resize(1);
    if (static_cast<int>(s.music.measures.size()) > measures) s.music.measures.resize(static_cast<std::size_t>(measures));
    out.push_back(std::move(s));
  }
  return out;
}

template <class T>
void shuffle_order(std::vector<T>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
}

// Hands out sample indices, reshuffling after every pass.
class Order {
 public:
  Order(std::size_t n, Rng& rng) : rng_(rng), order_(n) { std::iota(order_.begin(), order_.end(), std::size_t{0}); }
  std::size_t next() {
    if (pos_ == 0) shuffle_order(order_, rng_);
    const std::size_t i = order_[pos_];
    pos_ = (pos_ + 1) % order_.size();
    return i;
  }

 private:
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

// Cycles through the genres, drawing each genre's samples in reshuffled
// passes. Single-sample steps then alternate labels, which the classifier
// needs to leave its constant-output start.
class GenreOrder {
 public:
  GenreOrder(const std::vector<Sample>& samples, Rng& rng) {
    std::map<std::string, std::vector<std::size_t>> by_genre;
    for (std::size_t i = 0; i < samples.size(); ++i) by_genre[samples[i].genre].push_back(i);
    for (auto& [genre, members] : by_genre) {
      members_.push_back(members);
      orders_.emplace_back(members.size(), rng);
    }
  }
  std::size_t next() {
    const std::size_t g = turn_++ % members_.size();
    return members_[g][orders_[g].next()];
  }

 private:
  std::vector<std::vector<std::size_t>> members_;
  std::vector<Order> orders_;
  std::size_t turn_ = 0;
};

tensor::Schedule schedule_of(const Config& config, const std::string& prefix) {
  return {config.real(prefix + ".lr"), static_cast<std::uint64_t>(config.integer(prefix + ".warmup"))};
}

void log_header(const TrainLog& log, const std::string& columns) {
  if (log.csv) *log.csv << columns << "\n";
}

void log_row(const TrainLog& log, const std::string& what, std::uint64_t step, std::uint64_t steps, double lr,
             const std::vector<double>& values) {
  if (log.csv) {
    *log.csv << step << "," << std::setprecision(10) << lr;
    for (double v : values) *log.csv << "," << std::setprecision(10) << v;
    *log.csv << "\n";
  }
  if (log.progress && log.every > 0 && (step % static_cast<std::uint64_t>(log.every) == 0 || step == steps))
    *log.progress << what << " step " << step << "/" << steps << " loss " << std::fixed << std::setprecision(4)
                  << values.front() << std::defaultfloat << "\n";
}

std::vector<std::string> sorted_genres(const std::vector<Sample>& samples) {
  std::set<std::string> g;
  for (const auto& s : samples) g.insert(s.genre);
  return {g.begin(), g.end()};
}

Config config_from_meta(const std::map<std::string, std::string>& meta) {
  Config c = Config::preset("full");
  c.merge_text(meta.at("config"), "checkpoint config");
  return c;
}

const std::string& meta_at(const tensor::Checkpoint& ckpt, const std::string& key, const fs::path& path) {
  const auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end()) throw std::runtime_error(path.string() + ": checkpoint has no '" + key + "' entry");
  return it->second;
}

tensor::Checkpoint load_kind(const fs::path& path, const std::string& kind) {
  auto ckpt = tensor::load_checkpoint(path);
  const std::string found = checkpoint_kind(ckpt);
  if (found != kind) throw std::runtime_error(path.string() + ": expected a " + kind + " checkpoint, found '" + found + "'");
  return ckpt;
}

}  // namespace

LoadedClip load_clip(const fs::path& manifest_path, const ClipRecord& record) {
  LoadedClip c;
  c.record = record;
  c.skeleton = motion::read_skeleton(resolve(manifest_path, record.skeleton));
  c.midi = codec::read_smf_file(resolve(manifest_path, record.midi));
  return c;
}

std::vector<LoadedClip> load_split(const fs::path& manifest_path, const CorpusManifest& manifest, Split split) {
  std::vector<LoadedClip> out;
  for (const auto& r : manifest.select(split)) out.push_back(load_clip(manifest_path, r));
  return out;
}

std::vector<Sample> make_samples(const LoadedClip& clip, const Config& config, std::vector<std::string>* warnings) {
  return cut(clip.record.id, clip.record.genre, clip.skeleton, clip.midi, config, warnings);
}

std::vector<Sample> make_samples(const SyntheticClip& clip, const Config& config, std::vector<std::string>* warnings) {
  SmfData midi;
  midi.ticks_per_quarter = codec::kWriteTicksPerQuarter;
  midi.notes = clip.notes;
  midi.tempo.push_back({0, static_cast<int>(std::lround(60e6 / config.real("bpm")))});
  return cut(clip.id, clip.skeleton.genre, clip.skeleton, midi, config, warnings);
}

int measures_for(int frames, double fps, double bpm) {
  const double seconds_per_measure = 4.0 * 60.0 / bpm;
  return std::max(1, static_cast<int>(std::ceil(frames / fps / seconds_per_measure - 1e-9)));
}

motion::StyleConfig style_config(const Config& c, int genres) {
  return {c.integer("style.blocks"),    c.integer("style.channels"),  c.integer("style.kernel"),
          c.integer("style.gru_hidden"), c.integer("style.embedding"), c.integer("style.mlp_hidden"), genres};
}

motion::ContextConfig context_config(const Config& c, int genres) {
  motion::ContextConfig out;
  out.stgcn = {c.integers("motion.channels"), c.integer("motion.out"), c.integer("motion.kernel")};
  out.beat = {c.integer("beat.layers"), c.integer("beat.heads"), c.integer("beat.hidden")};
  out.style = style_config(c, genres);
  out.d_model = c.integer("drum.d_model");
  return out;
}

drum::DrumConfig drum_config(const Config& c) {
  drum::DrumConfig out;
  out.d_model = c.integer("drum.d_model");
  out.heads = c.integer("drum.heads");
  out.blocks = c.integer("drum.blocks");
  out.encoder_blocks = c.integer("drum.encoder_blocks");
  out.hidden = c.integer("drum.hidden");
  out.max_length = c.integer("drum.max_length");
  out.relative_clip = c.integer("drum.relative_clip");
  out.frames_per_slot = c.real("fps") * 60.0 / c.real("bpm") / 16.0;
  return out;
}

bert::BertConfig bert_config(const Config& c) {
  return {c.integer("bert.hidden"),     c.integer("bert.layers"),     c.integer("bert.heads"),
          c.integer("bert.ff"),         c.integer("bert.max_length"), c.integer("bert.relative_clip")};
}

tensor::AdamConfig adam_config(const Config& c) {
  return {c.real("adam.beta1"), c.real("adam.beta2"), c.real("adam.eps")};
}

int StyleSystem::genre_index(const std::string& genre) const {
  const auto it = std::find(genres.begin(), genres.end(), genre);
  if (it == genres.end()) throw std::runtime_error("style: genre '" + genre + "' was not in the training data");
  return static_cast<int>(it - genres.begin());
}

std::map<std::string, std::string> StyleSystem::meta() const {
  return {{"kind", "style"}, {"config", config.to_text()}, {"genres", join(genres)}};
}

std::map<std::string, std::string> DrumSystem::meta() const {
  return {{"kind", "drum"},
          {"config", config.to_text()},
          {"genres", join(genres)},
          {"vocab", vocab.serialize()},
          {"drum_track", std::to_string(drum_track)}};
}

std::map<std::string, std::string> BertSystem::meta() const {
  return {{"kind", "bert"}, {"config", config.to_text()}, {"vocab", vocab.serialize()}, {"scaffolds", scaffolds.serialize()}};
}

std::unique_ptr<StyleSystem> build_style(const Config& config, const std::vector<std::string>& genres) {
  auto s = std::make_unique<StyleSystem>();
  s->config = config;
  s->genres = genres;
  Rng rng(static_cast<std::uint64_t>(config.integer("seed")));
  s->branch = motion::StyleBranch(s->store, "style", style_config(config, static_cast<int>(genres.size())), rng);
  return s;
}

std::unique_ptr<DrumSystem> build_drum(const Config& config, const std::vector<std::string>& genres, const Vocab& vocab,
                                       int drum_track) {
  auto s = std::make_unique<DrumSystem>();
  s->config = config;
  s->genres = genres;
  s->vocab = vocab;
  s->drum_track = drum_track;
  Rng rng(static_cast<std::uint64_t>(config.integer("seed")));
  s->model = drum::DrumModel(s->store, vocab, context_config(config, static_cast<int>(genres.size())),
                             drum_config(config), rng);
  s->store.freeze("style.");
  return s;
}

std::unique_ptr<BertSystem> build_bert(const Config& config, const Vocab& vocab, const bert::ScaffoldStats& scaffolds) {
  auto s = std::make_unique<BertSystem>();
  s->config = config;
  s->vocab = vocab;
  s->scaffolds = scaffolds;
  Rng rng(static_cast<std::uint64_t>(config.integer("seed")));
  s->model = bert::BertGen(s->store, "bert", vocab, bert_config(config), rng);
  return s;
}

std::unique_ptr<StyleSystem> train_style(const Config& config, const std::vector<Sample>& train, TrainLog log) {
  if (train.empty()) throw std::runtime_error("train-style: no training samples");
  auto sys = build_style(config, sorted_genres(train));
  const auto steps = static_cast<std::uint64_t>(config.integer("style.steps"));
  const auto batch = static_cast<std::size_t>(std::max(1, config.integer("style.batch")));
  const auto schedule = schedule_of(config, "style");
  const auto adam = adam_config(config);
  const bool augment = config.flag("augment");
  Rng rng(static_cast<std::uint64_t>(config.integer("seed")) + 1);
  GenreOrder order(train, rng);
  log_header(log, "step,lr,loss");
  for (std::uint64_t t = 1; t <= steps; ++t) {
    std::vector<motion::StyleExample> examples;
    for (std::size_t b = 0; b < batch; ++b) {
      const Sample& s = train[order.next()];
      examples.push_back({augment ? motion::augment_affine(s.frames, rng) : s.frames, s.root, &s.graph,
                          sys->genre_index(s.genre)});
    }
    const double loss = motion::train_style_step(sys->branch, sys->store, examples, t, schedule, adam);
    log_row(log, "style", t, steps, schedule.lr(t), {loss});
  }
  return sys;
}

std::unique_ptr<DrumSystem> train_drum(const Config& config, const std::vector<Sample>& train, const StyleSystem* style,
                                       TrainLog log, std::vector<std::string>* warnings) {
  if (train.empty()) throw std::runtime_error("train-drum: no training samples");
  std::vector<std::vector<codec::TokenQuad>> targets;
  std::map<int, int> track_counts;
  for (const auto& s : train) {
    QuantizedClip drums = s.music;
    for (auto& m : drums.measures) {
      for (auto& e : m.events)
        std::erase_if(e.notes, [](const codec::SlotNote& n) { return n.instrument != codec::kDrumInstrument; });
      std::erase_if(m.events, [](const codec::SlotEvent& e) { return e.notes.empty(); });
      for (auto& e : m.events) {
        e.chord.reset();
        for (const auto& n : e.notes) ++track_counts[n.track];
      }
    }
    targets.push_back(codec::encode(drums));
  }
  const Vocab vocab = Vocab::build(targets);
  int drum_track = 0;
  int best = -1;
  for (const auto& [track, count] : track_counts)
    if (count > best) {
      best = count;
      drum_track = track;
    }
  auto sys = build_drum(config, style ? style->genres : sorted_genres(train), vocab, drum_track);
  if (style) {
    tensor::Checkpoint ckpt;
    ckpt.tensors = style->store.entries();
    tensor::restore(sys->store, ckpt, "style.");
  } else if (warnings) {
    warnings->push_back("train-drum: no style checkpoint given; the style branch stays at its random initialisation");
  }

  const int max_length = config.integer("drum.max_length");
  std::vector<drum::DrumExample> examples;
  std::vector<const Sample*> sources;
  for (std::size_t i = 0; i < train.size(); ++i) {
    drum::DrumExample ex;
    ex.target = codec::to_ids(targets[i], vocab, true);
    if (static_cast<int>(ex.target.size()) > max_length) {
      if (warnings)
        warnings->push_back(train[i].id + ": drum sequence of " + std::to_string(ex.target.size()) +
                            " tokens exceeds drum.max_length; skipped");
      continue;
    }
    ex.frames = train[i].frames;
    ex.root = train[i].root;
    ex.graph = &train[i].graph;
    ex.beats = motion::beat_indicator(train[i].beat_frames, static_cast<int>(train[i].frames.rows() / train[i].graph.joints));
    examples.push_back(std::move(ex));
    sources.push_back(&train[i]);
  }
  if (examples.empty()) throw std::runtime_error("train-drum: every sample exceeds drum.max_length");

  const auto steps = static_cast<std::uint64_t>(config.integer("drum.steps"));
  const auto batch = static_cast<std::size_t>(std::max(1, config.integer("drum.batch")));
  const auto schedule = schedule_of(config, "drum");
  const auto adam = adam_config(config);
  const bool augment = config.flag("augment");
  drum::DrumTrainOptions options;
  options.beat_class_weight = config.real("beat.class_weight");
  Rng rng(static_cast<std::uint64_t>(config.integer("seed")) + 2);
  Order order(examples.size(), rng);
  log_header(log, "step,lr,loss,token,beat");
  for (std::uint64_t t = 1; t <= steps; ++t) {
    std::vector<drum::DrumExample> b;
    for (std::size_t k = 0; k < batch; ++k) {
      b.push_back(examples[order.next()]);
      if (augment) b.back().frames = motion::augment_affine(b.back().frames, rng);
    }
    const auto losses = drum::train_step(sys->model, sys->store, b, t, schedule, adam, options);
    log_row(log, "drum", t, steps, schedule.lr(t), {losses.total, losses.token, losses.beat});
  }
  return sys;
}

std::unique_ptr<BertSystem> train_bert(const Config& config, const std::vector<Sample>& train, TrainLog log,
                                       std::vector<std::string>* warnings) {
  if (train.empty()) throw std::runtime_error("train-bert: no training samples");
  std::vector<std::vector<codec::TokenQuad>> tokens;
  bert::ScaffoldStats scaffolds;
  for (const auto& s : train) {
    tokens.push_back(codec::encode(s.music));
    scaffolds.add(s.music);
  }
  const Vocab vocab = Vocab::build(tokens);
  auto sys = build_bert(config, vocab, scaffolds);
  const int max_length = config.integer("bert.max_length");
  std::vector<codec::IdSequence> sequences;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto ids = codec::to_ids(tokens[i], vocab);
    if (static_cast<int>(ids.size()) > max_length) {
      if (warnings)
        warnings->push_back(train[i].id + ": sequence of " + std::to_string(ids.size()) +
                            " tokens exceeds bert.max_length; skipped");
      continue;
    }
    if (ids.size() < 2) continue;
    sequences.push_back(std::move(ids));
  }
  if (sequences.empty()) throw std::runtime_error("train-bert: no usable sequences");

  const auto steps = static_cast<std::uint64_t>(config.integer("bert.steps"));
  const auto batch = static_cast<std::size_t>(std::max(1, config.integer("bert.batch")));
  const auto schedule = schedule_of(config, "bert");
  const auto adam = adam_config(config);
  bert::BertTrainOptions options;
  options.mask_rate = config.real("bert.mask_rate");
  options.completion_share = config.real("bert.completion_share");
  Rng rng(static_cast<std::uint64_t>(config.integer("seed")) + 3);
  Order order(sequences.size(), rng);
  log_header(log, "step,lr,loss");
  for (std::uint64_t t = 1; t <= steps; ++t) {
    std::vector<codec::IdSequence> b;
    for (std::size_t k = 0; k < batch; ++k) b.push_back(sequences[order.next()]);
    const double loss = bert::train_step_bert(sys->model, sys->store, vocab, b, rng, t, schedule, adam, options);
    log_row(log, "bert", t, steps, schedule.lr(t), {loss});
  }
  return sys;
}

void save(const fs::path& path, const StyleSystem& system) { tensor::save_checkpoint(path, system.store, system.meta()); }
void save(const fs::path& path, const DrumSystem& system) { tensor::save_checkpoint(path, system.store, system.meta()); }
void save(const fs::path& path, const BertSystem& system) { tensor::save_checkpoint(path, system.store, system.meta()); }

std::string checkpoint_kind(const tensor::Checkpoint& ckpt) {
  const auto it = ckpt.meta.find("kind");
  return it == ckpt.meta.end() ? "" : it->second;
}

std::unique_ptr<StyleSystem> load_style(const fs::path& path) {
  const auto ckpt = load_kind(path, "style");
  auto sys = build_style(config_from_meta(ckpt.meta), split_list(meta_at(ckpt, "genres", path)));
  tensor::restore(sys->store, ckpt);
  return sys;
}

std::unique_ptr<DrumSystem> load_drum(const fs::path& path) {
  const auto ckpt = load_kind(path, "drum");
  auto sys = build_drum(config_from_meta(ckpt.meta), split_list(meta_at(ckpt, "genres", path)),
                        Vocab::deserialize(meta_at(ckpt, "vocab", path)), std::stoi(meta_at(ckpt, "drum_track", path)));
  tensor::restore(sys->store, ckpt);
  return sys;
}

std::unique_ptr<BertSystem> load_bert(const fs::path& path) {
  const auto ckpt = load_kind(path, "bert");
  auto sys = build_bert(config_from_meta(ckpt.meta), Vocab::deserialize(meta_at(ckpt, "vocab", path)),
                        bert::ScaffoldStats::deserialize(meta_at(ckpt, "scaffolds", path)));
  tensor::restore(sys->store, ckpt);
  return sys;
}

int predict_genre(const StyleSystem& system, const Matrix& frames, const motion::MotionGraph& graph, int root) {
  return motion::predict_genre(system.branch, frames, graph, root);
}

DrumOutput generate_drums(const DrumSystem& system, const motion::Skeleton& skeleton, const Config& options,
                          std::uint64_t seed) {
  const auto graph = motion::MotionGraph::of(skeleton);
  const auto ctx = system.model.context(skeleton, graph);
  drum::GenerateOptions g;
  g.sampler = {options.real("generate.temperature"), options.integer("generate.top_k")};
  g.max_measures = measures_for(skeleton.frame_count(), skeleton.fps, system.config.real("bpm"));
  g.drum_track = system.drum_track;
  Rng rng(seed);
  const auto generated = drum::generate(system.model.decoder, ctx.z, g, rng);
  DrumOutput out;
  out.tokens = generated.tokens;
  out.notes = codec::dequantize(codec::decode(out.tokens, codec::ticks_per_slot_for(codec::kWriteTicksPerQuarter)));
  for (std::size_t t = 0; t < ctx.zb.size(); ++t)
    if (ctx.zb[t]) out.beat_frames.push_back(static_cast<int>(t));
  return out;
}

std::vector<Note> complete_music(const BertSystem& system, const SmfData& drums, const Config& options,
                                 std::uint64_t seed, const bert::Scaffold* scaffold) {
  const int tps = codec::ticks_per_slot_for(drums.ticks_per_quarter);
  const auto drum_notes = codec::select_drums(drums.notes);
  const QuantizedClip clip = codec::quantize(drum_notes, tps);
  const auto drum_tokens = codec::encode(clip, system.vocab);
  Rng rng(seed);
  const bert::Scaffold plan =
      scaffold ? *scaffold : system.scaffolds.sample(static_cast<int>(clip.measures.size()), rng);
  bert::CompletionOptions c;
  c.sampler = {options.real("complete.temperature"), options.integer("complete.top_k")};
  c.fraction_per_round = options.real("complete.fraction");
  const auto tokens = bert::complete_tracks(system.model, system.vocab, drum_tokens, plan, c, rng);
  return codec::dequantize(codec::decode(tokens, codec::ticks_per_slot_for(codec::kWriteTicksPerQuarter)));
}

}  // namespace stepscore::pipeline
