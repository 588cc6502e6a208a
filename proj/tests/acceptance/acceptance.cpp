// End-to-end acceptance run. Prints one PASS/FAIL line per check and exits
// nonzero when any check fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support.hpp"
#include "stepscore/bert/bertgen.hpp"
#include "stepscore/codec/smf.hpp"
#include "stepscore/codec/tokens.hpp"
#include "stepscore/metrics/metrics.hpp"
#include "stepscore/pipeline/cli.hpp"
#include "stepscore/pipeline/gradcheck_suite.hpp"
#include "stepscore/pipeline/workflow.hpp"

namespace {

using namespace stepscore;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Report {
  int failures = 0;

  void check(const std::string& id, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << id << "  " << detail << std::endl;
    failures += ok ? 0 : 1;
  }
};

std::string num(double v, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// 1: beat average score arithmetic on two reference rows
void bas_rows(Report& r) {
  const double a = metrics::bas(0.73, 0.53);
  r.check("1a", std::abs(a - 0.65) <= 0.005, "bas(0.73, 0.53) = " + num(a) + ", want 0.65 +- 0.005");
  const double b = metrics::bas(0.76, 0.61);
  r.check("1b", std::abs(b - 0.69) <= 0.005, "bas(0.76, 0.61) = " + num(b) + ", want 0.69 +- 0.005");
}

// 2: closed forms of the music metrics
void metric_forms(Report& r) {
  std::vector<int> uniform;
  for (int p = 60; p < 72; ++p) uniform.push_back(p);
  const double h = metrics::phe({uniform});
  r.check("2a", std::abs(h - std::log2(12.0)) <= 1e-9, "phe(uniform 12-class bar) = " + num(h, 12));

  std::vector<int> bar{0, 4, 8, 12, 16, 20, 24, 28};
  const double same = metrics::gs({bar, bar, bar});
  r.check("2b", same == 1.0, "gs(identical bars) = " + num(same, 12));

  // the first half of the slots versus all of them: 32 of 64 disagree
  std::vector<int> first_half;
  std::vector<int> all;
  for (int s = 0; s < 64; ++s) (s < 32 ? first_half : all).push_back(s);
  all.insert(all.begin(), first_half.begin(), first_half.end());
  const double half = metrics::gs({first_half, all});
  r.check("2c", std::abs(half - 0.5) <= 1e-12, "gs(32-of-64 disagreement) = " + num(half, 12));
}

// 3: codec round trips on seeded random clips
void codec_round_trips(Report& r) {
  using namespace codec;
  std::mt19937_64 rng(3);
  int smf_ok = 0;
  int quad_ok = 0;
  int perm_ok = 0;
  const int trials = 1000;
  for (int trial = 0; trial < trials; ++trial) {
    const auto notes = testing::random_notes(rng, 40, 3);
    std::vector<std::string> warnings;
    smf_ok += parse_smf(write_smf(notes, 120.0, &warnings)).notes == notes && warnings.empty();

    const auto clip = testing::random_clip(rng);
    auto tokens = encode(clip);
    quad_ok += decode(tokens, clip.ticks_per_slot) == clip;
    for (std::size_t i = 0; i < tokens.size();) {
      std::size_t j = i;
      while (j < tokens.size() && tokens[j].event.kind == EventKind::Pitch && tokens[j].pos_group == tokens[i].pos_group)
        ++j;
      if (j > i + 1)
        std::shuffle(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(j),
                     rng);
      i = std::max(j, i + 1);
    }
    perm_ok += decode(tokens, clip.ticks_per_slot) == clip;
  }
  r.check("3a", smf_ok == trials, "parse(write(notes)) identity on " + std::to_string(smf_ok) + "/1000");
  r.check("3b", quad_ok == trials, "decode(encode(clip)) identity on " + std::to_string(quad_ok) + "/1000");
  r.check("3c", perm_ok == trials, "chord permutation invariance on " + std::to_string(perm_ok) + "/1000");
}

// 4: finite-difference gradient checks
void gradients(Report& r) {
  const auto t0 = Clock::now();
  bool all = true;
  double worst = 0.0;
  for (const auto& s : pipeline::run_gradcheck_suites()) {
    std::cout << "     " << std::left << std::setw(26) << s.name << " max rel error " << std::scientific
              << std::setprecision(2) << s.max_rel_error << std::defaultfloat << (s.passed ? "" : "  FAILED") << "\n";
    all = all && s.passed;
    worst = std::max(worst, s.max_rel_error);
  }
  const double secs = seconds_since(t0);
  r.check("4", all && secs < 120.0, "all suites below 1e-5 (worst " + num(worst, 3) + ") in " + num(secs, 3) + " s");
}

// 5: masking statistics
void masking(Report& r) {
  pipeline::SyntheticSpec spec;
  std::vector<std::vector<codec::TokenQuad>> tokens;
  for (int i = 0; i < 6; ++i)
    tokens.push_back(codec::encode(codec::quantize(pipeline::make_synthetic_clip(spec, i).notes, 30, 2)));
  const auto vocab = codec::Vocab::build(tokens);
  const auto seq = codec::to_ids(tokens[0], vocab);

  std::array<double, 3> counts{};
  double total = 0.0;
  bool one_field = true;
  bool two_measures = true;
  tensor::Rng rng(5);
  const auto measure = bert::measure_of(seq, vocab);
  while (total < 1e5) {
    const auto b = bert::measure_mask(seq, vocab, rng);
    std::set<int> fields;
    std::set<int> measures;
    for (int f = 0; f < codec::kFieldCount; ++f)
      for (std::size_t i = 0; i < seq.size(); ++i)
        if (b.masked[static_cast<std::size_t>(f)][i]) {
          fields.insert(f);
          measures.insert(measure[i]);
        }
    one_field = one_field && fields.size() == 1;
    two_measures = two_measures && measures.size() >= 2;
    for (auto rep : b.replacements) counts[static_cast<std::size_t>(rep)] += 1.0;
    total += static_cast<double>(b.replacements.size());
  }
  const double mask = 100.0 * counts[static_cast<std::size_t>(bert::Replacement::Mask)] / total;
  const double rand = 100.0 * counts[static_cast<std::size_t>(bert::Replacement::Random)] / total;
  const double keep = 100.0 * counts[static_cast<std::size_t>(bert::Replacement::Keep)] / total;
  r.check("5a", std::abs(mask - 80.0) <= 1.0 && std::abs(rand - 10.0) <= 0.5 && std::abs(keep - 10.0) <= 0.5,
          "mask/random/keep = " + num(mask, 4) + "/" + num(rand, 4) + "/" + num(keep, 4) + " % over " +
              num(total, 7) + " tokens");
  r.check("5b", one_field && two_measures, std::string("one field per draw: ") + (one_field ? "yes" : "no") +
                                               ", at least two measures per draw: " + (two_measures ? "yes" : "no"));
}

// 6: learned behaviour on the synthetic corpus with the desk preset
void learned(Report& r) {
  const auto t0 = Clock::now();
  const auto config = pipeline::Config::preset("desk");
  pipeline::SyntheticSpec spec;
  spec.clips = 250;
  spec.seed = static_cast<std::uint64_t>(config.integer("seed"));
  const auto clips = pipeline::make_synthetic(spec);
  std::vector<pipeline::ClipRecord> records;
  for (std::size_t i = 0; i < clips.size(); ++i)
    records.push_back({clips[i].id, "", "", clips[i].skeleton.genre, pipeline::Split::Train});
  const auto manifest = pipeline::split(records, spec.seed);
  std::map<std::string, pipeline::Split> split_of;
  for (const auto& c : manifest.clips) split_of[c.id] = c.split;

  std::vector<pipeline::Sample> train;
  std::vector<const pipeline::SyntheticClip*> test_clips;
  std::vector<pipeline::Sample> test;
  for (const auto& c : clips) {
    auto s = pipeline::make_samples(c, config);
    if (split_of[c.id] == pipeline::Split::Train) {
      std::move(s.begin(), s.end(), std::back_inserter(train));
    } else if (split_of[c.id] == pipeline::Split::Test) {
      test_clips.push_back(&c);
      std::move(s.begin(), s.end(), std::back_inserter(test));
    }
  }
  std::cout << "     corpus: " << train.size() << " training windows, " << test.size() << " test windows\n";

  // (b) style classifier
  auto t = Clock::now();
  const auto style = pipeline::train_style(config, train);
  int correct = 0;
  for (const auto& s : test) correct += pipeline::predict_genre(*style, s.frames, s.graph, s.root) == style->genre_index(s.genre);
  const double style_acc = static_cast<double>(correct) / static_cast<double>(test.size());
  std::cout << "     style trained in " << num(seconds_since(t), 3) << " s\n";

  // drum system: beat head and generation
  t = Clock::now();
  const auto drums = pipeline::train_drum(config, train, style.get());
  std::cout << "     drum trained in " << num(seconds_since(t), 3) << " s\n";
  double f1 = 0.0;
  int onsets = 0;
  int aligned = 0;
  for (std::size_t i = 0; i < test_clips.size(); ++i) {
    const auto& sk = test_clips[i]->skeleton;
    const auto out = pipeline::generate_drums(*drums, sk, config, 100 + i);
    const int frames = sk.frame_count();
    f1 += motion::frame_scores(motion::beat_indicator(out.beat_frames, frames), motion::beat_indicator(sk.beat_frames, frames)).f1;
    const double seconds_per_tick = 60.0 / config.real("bpm") / codec::kWriteTicksPerQuarter;
    for (const auto& n : out.notes) {
      const double at = static_cast<double>(n.onset) * seconds_per_tick;
      bool ok = false;
      for (int b : sk.beat_frames) ok = ok || std::abs(at - b / sk.fps) <= 0.1 + 1e-9;
      aligned += ok;
      ++onsets;
    }
  }
  f1 /= static_cast<double>(test_clips.size());

  // (c) memorise one pair from scratch
  t = Clock::now();
  const auto& pair = train.front();
  codec::QuantizedClip drum_only = pair.music;
  for (auto& m : drum_only.measures) {
    for (auto& e : m.events) {
      std::erase_if(e.notes, [](const codec::SlotNote& n) { return n.instrument != codec::kDrumInstrument; });
      e.chord.reset();
    }
    std::erase_if(m.events, [](const codec::SlotEvent& e) { return e.notes.empty(); });
  }
  const auto pair_tokens = codec::encode(drum_only);
  const auto pair_vocab = codec::Vocab::build(std::span(&pair_tokens, 1));
  auto single = pipeline::build_drum(config, style->genres, pair_vocab, 0);
  drum::DrumExample ex;
  ex.frames = pair.frames;
  ex.root = pair.root;
  ex.graph = &pair.graph;
  ex.beats = motion::beat_indicator(pair.beat_frames, static_cast<int>(pair.frames.rows() / pair.graph.joints));
  ex.target = codec::to_ids(pair_tokens, pair_vocab, true);
  const tensor::Schedule schedule{config.real("drum.lr"), static_cast<std::uint64_t>(config.integer("drum.warmup"))};
  int memorised_at = -1;
  double pair_acc = 0.0;
  for (int step = 1; step <= 500; ++step) {
    drum::train_step(single->model, single->store, std::span(&ex, 1), static_cast<std::uint64_t>(step), schedule,
                     pipeline::adam_config(config));
    if (step % 10 == 0) {
      const auto ctx = single->model.context(ex.frames, pair.graph, ex.root, &ex.beats);
      pair_acc = drum::next_token_accuracy(single->model.decoder(ex.target, ctx.z), ex.target);
      if (pair_acc == 1.0) {
        memorised_at = step;
        break;
      }
    }
  }
  std::cout << "     single pair run took " << num(seconds_since(t), 3) << " s\n";

  // (d) echo completion with the true scaffold
  t = Clock::now();
  const auto bert_system = pipeline::train_bert(config, train);
  std::cout << "     bert trained in " << num(seconds_since(t), 3) << " s\n";
  std::size_t hits = 0;
  std::size_t denom = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& s = test[i];
    codec::SmfData input;
    input.ticks_per_quarter = codec::kWriteTicksPerQuarter;
    input.notes = codec::select_drums(codec::dequantize(s.music));
    const auto scaffold = bert::scaffold_of(s.music);
    const auto full = pipeline::complete_music(*bert_system, input, config, 200 + i, &scaffold);
    const auto got = codec::select_non_drums(full);
    const auto want = codec::select_non_drums(codec::dequantize(s.music));
    for (const auto& w : want)
      hits += std::any_of(got.begin(), got.end(), [&](const codec::Note& g) {
        return g.onset == w.onset && g.pitch == w.pitch && g.duration == w.duration && g.track == w.track &&
               g.instrument == w.instrument;
      });
    denom += std::max(want.size(), got.size());
  }
  const double echo = denom ? static_cast<double>(hits) / static_cast<double>(denom) : 0.0;

  const double align = onsets ? static_cast<double>(aligned) / onsets : 0.0;
  const double secs = seconds_since(t0);
  r.check("6a", f1 >= 0.9, "beat head F1 " + num(f1, 4) + " on " + std::to_string(test_clips.size()) + " test clips");
  r.check("6b", style_acc >= 0.95, "style accuracy " + num(style_acc, 4) + " on 2 archetypes");
  r.check("6c", memorised_at > 0,
          memorised_at > 0 ? "one pair memorised (next-token accuracy 1) after " + std::to_string(memorised_at) + " steps"
                           : "next-token accuracy " + num(pair_acc, 4) + " after 500 steps");
  r.check("6d", echo >= 0.9, "echo track reproduced with note accuracy " + num(echo, 4));
  r.check("6e", align >= 0.6, num(100.0 * align, 4) + " % of " + std::to_string(onsets) +
                                  " generated onsets within 0.1 s of a planted beat");
  r.check("6", secs <= 1800.0, "learned-behaviour runtime " + num(secs, 4) + " s (budget 1800 s)");
}

// 7: every subcommand twice with the same seed gives the same bytes
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream f(e.path(), std::ios::binary);
      std::ostringstream s;
      s << f.rdbuf();
      out[fs::relative(e.path(), dir).string()] = s.str();
    }
  return out;
}

std::string run_all(const fs::path& dir, bool& ok) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = dir.string() + "/";
  const std::vector<std::vector<std::string>> commands{
      {"make-synth", "--out", d + "corpus", "--clips", "20", "--seed", "7"},
      {"split", "--manifest", d + "corpus/manifest.json", "--out", d + "resplit.json", "--seed", "9"},
      {"tokenize", d + "corpus/clip0000.mid", "--out", d + "clip0000.txt"},
      {"detokenize", d + "clip0000.txt", "--out", d + "clip0000.mid"},
      {"train-style", "--corpus", d + "corpus/manifest.json", "--out", d + "style.ckpt", "--steps", "30", "--seed", "7"},
      {"train-drum", "--corpus", d + "corpus/manifest.json", "--style", d + "style.ckpt", "--out", d + "drum.ckpt",
       "--steps", "30", "--seed", "7"},
      {"train-bert", "--corpus", d + "corpus/manifest.json", "--out", d + "bert.ckpt", "--steps", "30", "--seed", "7"},
      {"generate", "--ckpt", d + "drum.ckpt", "--skeleton", d + "corpus/clip0001.json", "--out", d + "gen/clip0001.mid",
       "--tokens", d + "gen.txt", "--seed", "7"},
      {"complete", "--ckpt", d + "bert.ckpt", "--drum", d + "gen/clip0001.mid", "--out", d + "full.mid", "--seed", "7"},
      {"evaluate", "--gen", d + "gen", "--ref", d + "corpus/clip0001.mid", "--beats", d + "corpus/clip0001.json", "--out",
       d + "report.csv"},
      {"stats", d + "drum.ckpt"},
      {"stats", d + "corpus/manifest.json"},
      {"gradcheck"},
  };
  std::ostringstream transcript;
  for (const auto& c : commands) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = pipeline::run(c, out, err);
    if (code != 0) {
      ok = false;
      std::cout << "     " << c.front() << " exited " << code << ": " << err.str();
    }
    // paths differ between the two runs; strip them from the transcript
    std::string text = out.str();
    for (std::size_t p; (p = text.find(d)) != std::string::npos;) text.erase(p, d.size());
    transcript << c.front() << " -> " << code << "\n" << text;
  }
  return transcript.str();
}

void determinism(Report& r) {
  const fs::path base = fs::temp_directory_path() / "stepscore_acceptance";
  bool ok = true;
  const std::string first = run_all(base / "a", ok);
  const std::string second = run_all(base / "b", ok);
  const auto a = tree(base / "a");
  const auto b = tree(base / "b");
  std::vector<std::string> differ;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) differ.push_back(name);
  }
  if (a.size() != b.size()) differ.push_back("(file sets differ)");
  for (const auto& name : differ) std::cout << "     differs: " << name << "\n";
  r.check("7", ok && differ.empty() && first == second,
          std::to_string(a.size()) + " output files and stdout of 12 subcommands byte-identical across two runs");
  fs::remove_all(base);
}

// 8: learning-rate schedule
void schedule(Report& r) {
  const tensor::Schedule s{0.0007, 6000};
  const double at = s.lr(6000);
  r.check("8a", at == 0.0007, "lr(6000) = " + num(at, 17));
  // the two branches meet at the warmup step
  const double left = s.peak * 6000.0 / 6000.0;
  const double right = s.peak * std::sqrt(6000.0 / 6000.0);
  const double jump = std::max({std::abs(s.lr(5999) + s.peak / 6000.0 - at), std::abs(left - right), std::abs(s.lr(6000) - left)});
  r.check("8b", jump <= 1e-12, "discontinuity at the warmup boundary " + num(jump, 3));
}

}  // namespace

int main() {
  Report r;
  const auto t0 = Clock::now();
  bas_rows(r);
  metric_forms(r);
  codec_round_trips(r);
  gradients(r);
  masking(r);
  learned(r);
  determinism(r);
  schedule(r);
  std::cout << (r.failures ? "FAILED " : "ALL PASSED ") << r.failures << " check(s) failed in "
            << num(seconds_since(t0), 4) << " s" << std::endl;
  return r.failures ? 1 : 0;
}
