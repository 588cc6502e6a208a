#include "stepscore/pipeline/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "stepscore/metrics/metrics.hpp"
#include "stepscore/pipeline/gradcheck_suite.hpp"
#include "stepscore/pipeline/workflow.hpp"

namespace stepscore::pipeline {

namespace fs = std::filesystem;

namespace {

// Options every model-facing subcommand accepts.
struct Settings {
  std::string preset = "desk";
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::int64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "base settings")->check(CLI::IsMember(Config::preset_names()));
    app->add_option("--config", config_file, "key = value file applied on top of the preset");
    app->add_option("--set", sets, "one key=value override (repeatable)");
    app->add_option("--seed", seed, "random seed (same as --set seed=N)");
  }

  Config resolve() const {
    Config c = Config::preset(preset);
    if (!config_file.empty()) c.merge_file(config_file);
    for (const auto& s : sets) c.set(s);
    if (seed) c.set("seed", std::to_string(*seed));
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void write_midi(const fs::path& path, const std::vector<codec::Note>& notes, double bpm, std::ostream& err) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<std::string> warnings;
  codec::write_smf_file(path, notes, bpm, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
}

std::vector<Sample> load_samples(const fs::path& manifest_path, Split split, const Config& config, std::ostream& err) {
  const auto manifest = read_manifest(manifest_path);
  std::vector<std::string> warnings;
  std::vector<Sample> out;
  for (const auto& clip : load_split(manifest_path, manifest, split)) {
    auto s = make_samples(clip, config, &warnings);
    std::move(s.begin(), s.end(), std::back_inserter(out));
  }
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  return out;
}

fs::path log_path(const std::string& given, const fs::path& out) {
  return given.empty() ? fs::path(out.string() + ".loss.csv") : fs::path(given);
}

// Files given directly, or the *.mid / *.json files inside one directory.
std::vector<fs::path> expand(const std::vector<std::string>& items, const std::string& extension) {
  std::vector<fs::path> out;
  for (const auto& item : items) {
    if (fs::is_directory(item)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(item))
        if (e.is_regular_file() && e.path().extension() == extension) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(item);
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

int cmd_tokenize(const std::string& input, const std::string& output, std::ostream& out) {
  const auto midi = codec::read_smf_file(input);
  codec::TokenFile file;
  file.ticks_per_slot = codec::ticks_per_slot_for(midi.ticks_per_quarter);
  file.bpm = midi.initial_bpm();
  file.tokens = codec::encode(codec::quantize(midi.notes, file.ticks_per_slot));
  if (output.empty()) {
    codec::write_tokens(out, file);
  } else {
    std::ostringstream text;
    codec::write_tokens(text, file);
    write_text(output, text.str());
  }
  return kExitOk;
}

int cmd_detokenize(const std::string& input, const std::string& output, std::ostream& err) {
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot read " + input);
  const auto file = codec::read_tokens(in);
  // the slot grid does not depend on resolution, so write at the writer's own
  const auto clip = codec::decode(file.tokens, codec::ticks_per_slot_for(codec::kWriteTicksPerQuarter));
  write_midi(output, codec::dequantize(clip), file.bpm, err);
  return kExitOk;
}

int cmd_make_synth(const std::string& dir, int clips, const Config& config, bool fixed_phase, std::ostream& out) {
  SyntheticSpec spec;
  spec.clips = clips;
  spec.seed = static_cast<std::uint64_t>(config.integer("seed"));
  spec.fps = config.real("fps");
  spec.bpm = config.real("bpm");
  spec.random_phase = !fixed_phase;
  const auto ids = write_synthetic(spec, dir);
  std::vector<ClipRecord> records;
  for (std::size_t i = 0; i < ids.size(); ++i)
    records.push_back({ids[i], ids[i] + ".json", ids[i] + ".mid", spec.genres[i % spec.genres.size()], Split::Train});
  auto manifest = split(records, spec.seed);
  manifest.fps = spec.fps;
  manifest.window = config.integer("window");
  manifest.stride = config.integer("stride");
  write_manifest(fs::path(dir) / "manifest.json", manifest);
  out << "wrote " << ids.size() << " clips and manifest.json to " << dir << "\n";
  for (auto s : {Split::Train, Split::Val, Split::Test})
    out << split_name(s) << " " << manifest.select(s).size() << "\n";
  return kExitOk;
}

int cmd_split(const std::string& input, const std::string& output, const Config& config, std::ostream& out) {
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot read " + input);
  std::ostringstream text;
  text << in.rdbuf();
  const auto old = parse_manifest(text.str());
  auto manifest = split(old.clips, static_cast<std::uint64_t>(config.integer("seed")));
  manifest.fps = old.fps;
  manifest.window = old.window;
  manifest.stride = old.stride;
  write_manifest(output, manifest);
  for (auto s : {Split::Train, Split::Val, Split::Test})
    out << split_name(s) << " " << manifest.select(s).size() << "\n";
  out << "hash " << std::hex << std::setw(16) << std::setfill('0') << manifest.hash() << std::dec << "\n";
  return kExitOk;
}

int cmd_train(const std::string& what, const std::string& corpus, const std::string& output,
              const std::string& log_file, const std::string& style_ckpt, const Config& config, std::ostream& out,
              std::ostream& err) {
  const auto train = load_samples(corpus, Split::Train, config, err);
  std::ostringstream csv;
  TrainLog log{&csv, &err, 500};
  std::vector<std::string> warnings;
  if (what == "style") {
    const auto sys = train_style(config, train, log);
    save(output, *sys);
    // held-out accuracy on the validation split
    const auto val = load_samples(corpus, Split::Val, config, err);
    int correct = 0;
    for (const auto& s : val) correct += predict_genre(*sys, s.frames, s.graph, s.root) == sys->genre_index(s.genre);
    out << "style: " << train.size() << " training windows, genres " << sys->genres.size() << "\n";
    if (!val.empty()) out << "validation accuracy " << fixed(static_cast<double>(correct) / val.size(), 4) << "\n";
  } else if (what == "drum") {
    std::unique_ptr<StyleSystem> style;
    if (!style_ckpt.empty()) style = load_style(style_ckpt);
    const auto sys = train_drum(config, train, style.get(), log, &warnings);
    save(output, *sys);
    out << "drum: " << train.size() << " training windows, " << sys->store.parameter_count() << " parameters\n";
  } else {
    const auto sys = train_bert(config, train, log, &warnings);
    save(output, *sys);
    out << "bert: " << train.size() << " training windows, " << sys->store.parameter_count() << " parameters\n";
  }
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  const fs::path lp = log_path(log_file, output);
  write_text(lp, csv.str());
  out << "checkpoint " << output << "\nloss log " << lp.string() << "\n";
  return kExitOk;
}

int cmd_generate(const std::string& ckpt, const std::string& skeleton_file, const std::string& output,
                 const std::string& tokens_file, const Config& config, std::ostream& out, std::ostream& err) {
  const auto sys = load_drum(ckpt);
  const auto skeleton = motion::read_skeleton(skeleton_file);
  const auto gen = generate_drums(*sys, skeleton, config, static_cast<std::uint64_t>(config.integer("seed")));
  write_midi(output, gen.notes, sys->config.real("bpm"), err);
  if (!tokens_file.empty()) {
    codec::TokenFile file;
    file.tokens = gen.tokens;
    file.bpm = sys->config.real("bpm");
    std::ostringstream text;
    codec::write_tokens(text, file);
    write_text(tokens_file, text.str());
  }
  out << "generated " << gen.notes.size() << " drum notes, " << gen.beat_frames.size() << " beat frames\n";
  return kExitOk;
}

int cmd_complete(const std::string& ckpt, const std::string& drum_file, const std::string& output, const Config& config,
                 std::ostream& out, std::ostream& err) {
  const auto sys = load_bert(ckpt);
  const auto drums = codec::read_smf_file(drum_file);
  const auto notes = complete_music(*sys, drums, config, static_cast<std::uint64_t>(config.integer("seed")));
  write_midi(output, notes, drums.initial_bpm(), err);
  const auto added = std::count_if(notes.begin(), notes.end(), [](const codec::Note& n) { return !n.is_drum(); });
  out << "completed " << notes.size() << " notes (" << added << " added)\n";
  return kExitOk;
}

int cmd_evaluate(const std::vector<std::string>& gen_items, const std::vector<std::string>& ref_items,
                 const std::vector<std::string>& skeleton_items, const std::string& output, const Config& config,
                 std::ostream& out) {
  const auto gens = expand(gen_items, ".mid");
  const auto refs = expand(ref_items, ".mid");
  const auto skels = expand(skeleton_items, ".json");
  if (gens.empty()) throw std::runtime_error("evaluate: no generated files");
  if (gens.size() != refs.size())
    throw std::runtime_error("evaluate: " + std::to_string(gens.size()) + " generated files but " +
                             std::to_string(refs.size()) + " references");
  if (!skels.empty() && skels.size() != gens.size())
    throw std::runtime_error("evaluate: " + std::to_string(skels.size()) + " skeletons for " +
                             std::to_string(gens.size()) + " pairs");
  const double tol = config.real("eval.tolerance");
  std::vector<metrics::MetricReport> reports;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const auto gen = codec::read_smf_file(gens[i]);
    const auto ref = codec::read_smf_file(refs[i]);
    const std::string id = gens[i].stem().string();
    if (skels.empty()) {
      reports.push_back(metrics::evaluate_pair(id, gen, ref, nullptr, config.real("fps"), tol));
    } else {
      const auto sk = motion::read_skeleton(skels[i]);
      reports.push_back(metrics::evaluate_pair(id, gen, ref, &sk.beat_frames, sk.fps, tol));
    }
  }
  if (!output.empty()) {
    std::ostringstream csv;
    metrics::write_csv(csv, reports);
    write_text(output, csv.str());
  }
  const auto m = metrics::mean_report(reports);
  out << "clips " << reports.size() << "\n";
  out << "Bg " << fixed(m.bg, 2) << "\nBt " << fixed(m.bt, 2) << "\nBa " << fixed(m.ba, 2) << "\n";
  out << "BCS " << fixed(m.bcs, 2) << "\nBHS " << fixed(m.bhs, 2) << "\nBAS " << fixed(m.bas, 2) << "\n";
  out << "PHE " << (m.phe ? fixed(*m.phe, 2) : "n/a") << "\nGS " << (m.gs ? fixed(*m.gs, 2) : "n/a") << "\n";
  return kExitOk;
}

int cmd_gradcheck(std::ostream& out) {
  bool all = true;
  for (const auto& r : run_gradcheck_suites()) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  max rel error " << std::scientific << std::setprecision(2)
        << r.max_rel_error << std::defaultfloat << " over " << r.checked << " entries\n";
    all = all && r.passed;
  }
  return all ? kExitOk : kExitFailure;
}

void stats_manifest(const fs::path& path, const Config& config, std::ostream& out, std::ostream& err) {
  const auto manifest = read_manifest(path);
  out << "manifest " << path.string() << "\nclips " << manifest.clips.size() << "\nseed " << manifest.seed << "\n";
  std::map<std::string, std::array<int, 3>> per_genre;
  for (const auto& c : manifest.clips) ++per_genre[c.genre][static_cast<std::size_t>(c.split)];
  for (const auto& [g, n] : per_genre) out << "genre " << g << " train " << n[0] << " val " << n[1] << " test " << n[2] << "\n";
  std::vector<std::vector<codec::TokenQuad>> corpus;
  std::size_t windows = 0;
  std::size_t notes = 0;
  std::size_t longest = 0;
  for (auto s : {Split::Train, Split::Val, Split::Test})
    for (const auto& sample : load_samples(path, s, config, err)) {
      ++windows;
      notes += sample.music.note_count();
      corpus.push_back(codec::encode(sample.music));
      longest = std::max(longest, corpus.back().size());
    }
  out << "windows " << windows << "\nnotes " << notes << "\nlongest sequence " << longest << "\n";
  const auto vocab = codec::Vocab::build(corpus);
  for (auto f : codec::kFields) out << "vocab " << codec::field_name(f) << " " << vocab.size(f) << "\n";
}

void stats_midi(const fs::path& path, std::ostream& out) {
  const auto midi = codec::read_smf_file(path);
  const auto clip = codec::quantize(midi.notes, codec::ticks_per_slot_for(midi.ticks_per_quarter));
  std::set<std::pair<int, int>> tracks;
  for (const auto& n : midi.notes) tracks.insert({n.track, n.instrument});
  out << "midi " << path.string() << "\nformat " << midi.format << "\nticks_per_quarter " << midi.ticks_per_quarter
      << "\nbpm " << fixed(midi.initial_bpm(), 2) << "\nnotes " << midi.notes.size() << "\ndrum notes "
      << codec::select_drums(midi.notes).size() << "\n(track, instrument) pairs " << tracks.size() << "\nmeasures "
      << clip.measures.size() << "\ntokens " << codec::encode(clip).size() << "\nbeats "
      << metrics::detect_beats(midi.notes, midi).size() << "\n";
}

void stats_checkpoint(const fs::path& path, std::ostream& out) {
  const auto ckpt = tensor::load_checkpoint(path);
  std::size_t params = 0;
  for (const auto& t : ckpt.tensors) params += static_cast<std::size_t>(t.param.value().size());
  out << "checkpoint " << path.string() << "\nkind " << checkpoint_kind(ckpt) << "\nstep " << ckpt.step
      << "\ntensors " << ckpt.tensors.size() << "\nparameters " << params << "\n";
  for (const auto& [k, v] : ckpt.meta)
    if (k != "kind" && k != "config" && k != "vocab" && k != "scaffolds") out << k << " " << v << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dance-conditioned multi-track MIDI generation", "stepscore"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  std::string in_file;
  std::string out_file;
  std::string log_file;
  std::string style_ckpt;
  std::string ckpt;
  std::string skeleton;
  std::string tokens_file;
  std::vector<std::string> gen_items;
  std::vector<std::string> ref_items;
  std::vector<std::string> skel_items;
  std::optional<std::int64_t> steps;
  std::optional<double> tolerance;
  int clips = 250;
  bool fixed_phase = false;
  Settings settings;

  auto* tokenize = app.add_subcommand("tokenize", "MIDI file to token text");
  tokenize->add_option("input", in_file, "MIDI file")->required()->check(CLI::ExistingFile);
  tokenize->add_option("--out", out_file, "token file (default: stdout)");

  auto* detokenize = app.add_subcommand("detokenize", "token text to MIDI file");
  detokenize->add_option("input", in_file, "token file")->required()->check(CLI::ExistingFile);
  detokenize->add_option("--out", out_file, "MIDI file")->required();

  auto* make_synth = app.add_subcommand("make-synth", "write the paired synthetic corpus and its manifest");
  make_synth->add_option("--out", out_file, "output directory")->required();
  make_synth->add_option("--clips", clips, "number of clips")->check(CLI::PositiveNumber);
  make_synth->add_flag("--fixed-phase", fixed_phase, "every clip's first beat on frame 0");
  settings.attach(make_synth);

  auto* split_cmd = app.add_subcommand("split", "reassign train/val/test per genre");
  split_cmd->add_option("--manifest", in_file, "input manifest")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--out", out_file, "output manifest")->required();
  settings.attach(split_cmd);

  std::map<std::string, CLI::App*> trainers;
  for (const std::string what : {"style", "drum", "bert"}) {
    auto* t = app.add_subcommand("train-" + what, "train the " + what + " model");
    t->add_option("--corpus", in_file, "corpus manifest")->required()->check(CLI::ExistingFile);
    t->add_option("--out", out_file, "checkpoint file")->required();
    t->add_option("--steps", steps, "training steps (same as --set " + what + ".steps=N)");
    t->add_option("--log", log_file, "per-step loss CSV (default: <out>.loss.csv)");
    if (what == "drum") t->add_option("--style", style_ckpt, "pretrained style checkpoint")->check(CLI::ExistingFile);
    settings.attach(t);
    trainers[what] = t;
  }

  auto* generate = app.add_subcommand("generate", "drum track for a skeleton");
  generate->add_option("--ckpt", ckpt, "drum checkpoint")->required()->check(CLI::ExistingFile);
  generate->add_option("--skeleton", skeleton, "skeleton JSON")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", out_file, "MIDI file")->required();
  generate->add_option("--tokens", tokens_file, "also write the generated tokens");
  settings.attach(generate);

  auto* complete = app.add_subcommand("complete", "add the remaining tracks to a drum track");
  complete->add_option("--ckpt", ckpt, "bert checkpoint")->required()->check(CLI::ExistingFile);
  complete->add_option("--drum", in_file, "drum MIDI file")->required()->check(CLI::ExistingFile);
  complete->add_option("--out", out_file, "MIDI file")->required();
  settings.attach(complete);

  auto* evaluate = app.add_subcommand("evaluate", "beat and music metrics of generated files");
  evaluate->add_option("--gen", gen_items, "generated MIDI files or a directory")->required();
  evaluate->add_option("--ref", ref_items, "reference MIDI files or a directory")->required();
  evaluate->add_option("--beats,--skeleton", skel_items, "skeleton JSON files or a directory; their beat annotation is the reference");
  evaluate->add_option("--tol", tolerance, "alignment tolerance in seconds (same as --set eval.tolerance=S)")
      ->check(CLI::PositiveNumber);
  evaluate->add_option("--out", out_file, "per-clip CSV report");
  settings.attach(evaluate);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of every layer");

  auto* stats = app.add_subcommand("stats", "describe a manifest, MIDI file or checkpoint");
  stats->add_option("input", in_file, "file")->required()->check(CLI::ExistingFile);
  settings.attach(stats);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "stepscore: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    Config config = settings.resolve();
    if (name == "tokenize") return cmd_tokenize(in_file, out_file, out);
    if (name == "detokenize") return cmd_detokenize(in_file, out_file, err);
    if (name == "make-synth") return cmd_make_synth(out_file, clips, config, fixed_phase, out);
    if (name == "split") return cmd_split(in_file, out_file, config, out);
    for (const auto& [what, sub] : trainers)
      if (sub == chosen) {
        if (steps) config.set(what + ".steps", std::to_string(*steps));
        return cmd_train(what, in_file, out_file, log_file, style_ckpt, config, out, err);
      }
    if (name == "generate") return cmd_generate(ckpt, skeleton, out_file, tokens_file, config, out, err);
    if (name == "complete") return cmd_complete(ckpt, in_file, out_file, config, out, err);
    if (tolerance) config.set("eval.tolerance", std::to_string(*tolerance));
    if (name == "evaluate") return cmd_evaluate(gen_items, ref_items, skel_items, out_file, config, out);
    if (name == "gradcheck") return cmd_gradcheck(out);
    if (name == "stats") {
      const fs::path p(in_file);
      if (p.extension() == ".json") {
        stats_manifest(p, config, out, err);
      } else if (p.extension() == ".mid" || p.extension() == ".midi") {
        stats_midi(p, out);
      } else {
        stats_checkpoint(p, out);
      }
      return kExitOk;
    }
    (void)gradcheck;
    err << "stepscore: unhandled subcommand " << name << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "stepscore " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "stepscore " << name << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace stepscore::pipeline
