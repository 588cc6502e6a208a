#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "stepscore/codec/smf.hpp"
#include "stepscore/pipeline/cli.hpp"
#include "stepscore/pipeline/config.hpp"

using namespace stepscore;
using namespace stepscore::pipeline;

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("stepscore_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string at(const std::string& file) const { return (path / file).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// one isolated note per onset, all on the slot grid at 480 ticks per quarter
std::vector<codec::Note> hits(const std::vector<std::int64_t>& onsets) {
  std::vector<codec::Note> out;
  for (auto t : onsets) out.push_back({0, t, 60, 60, 0, 100});
  return out;
}

}  // namespace

TEST_CASE("usage errors exit 2 with usage text") {
  auto r = call({});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = call({"tokenize", "--bogus"});
  CHECK(r.code == kExitUsage);
  r = call({"detokenize"});
  CHECK(r.code == kExitUsage);
  r = call({"stats", "/no/such/file"});
  CHECK(r.code == kExitUsage);
}

TEST_CASE("help exits 0") {
  auto r = call({"--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("make-synth") != std::string::npos);
  r = call({"train-drum", "--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("--style") != std::string::npos);
}

TEST_CASE("an unknown config key is a usage error naming the subcommand") {
  TempDir dir("badkey");
  codec::write_smf_file(dir.at("a.mid"), hits({0}));
  auto r = call({"make-synth", "--out", dir.at("c"), "--set", "drum.widht=3"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("make-synth") != std::string::npos);
  CHECK(r.err.find("drum.widht") != std::string::npos);
}

TEST_CASE("runtime failures exit 1 with the subcommand in the message") {
  TempDir dir("runtime");
  std::ofstream(dir.at("junk.mid")) << "not a midi file";
  const auto r = call({"tokenize", dir.at("junk.mid")});
  CHECK(r.code == kExitFailure);
  CHECK(r.err.rfind("stepscore tokenize:", 0) == 0);
}

TEST_CASE("tokenize then detokenize reproduces a grid-aligned MIDI file") {
  TempDir dir("roundtrip");
  std::vector<codec::Note> notes{{0, 0, 36, 30, codec::kDrumInstrument, 100}, {0, 480, 38, 30, codec::kDrumInstrument, 100},
                                 {1, 0, 60, 240, 0, 100},  {1, 0, 64, 240, 0, 100},
                                 {1, 0, 67, 240, 0, 100},  {2, 1920, 48, 960, 32, 100}};
  std::sort(notes.begin(), notes.end());
  codec::write_smf_file(dir.at("in.mid"), notes, 100.0);
  REQUIRE(call({"tokenize", dir.at("in.mid"), "--out", dir.at("t.txt")}).code == 0);
  REQUIRE(call({"detokenize", dir.at("t.txt"), "--out", dir.at("out.mid")}).code == 0);
  CHECK(slurp(dir.at("in.mid")) == slurp(dir.at("out.mid")));

  const auto printed = call({"tokenize", dir.at("in.mid")});
  CHECK(printed.out == slurp(dir.at("t.txt")));
  CHECK(printed.out.find("# bpm: 100") != std::string::npos);
}

TEST_CASE("evaluate on a 53-of-100 fixture prints BAS 0.65") {
  // 100 reference beats every half second; 53 generated onsets on them and
  // 20 more a quarter second off, outside the 0.1 s tolerance
  TempDir dir("table");
  std::vector<std::int64_t> ref;
  std::vector<std::int64_t> gen;
  for (int i = 0; i < 100; ++i) ref.push_back(480LL * i);
  for (int i = 0; i < 53; ++i) gen.push_back(480LL * i);
  for (int i = 0; i < 20; ++i) gen.push_back(480LL * (53 + i) + 240);
  codec::write_smf_file(dir.at("ref.mid"), hits(ref));
  fs::create_directories(dir.at("gen"));
  codec::write_smf_file(dir.at("gen/clip.mid"), hits(gen));

  const auto r = call({"evaluate", "--gen", dir.at("gen"), "--ref", dir.at("ref.mid"), "--out", dir.at("report.csv")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Bg 73.00") != std::string::npos);
  CHECK(r.out.find("Bt 100.00") != std::string::npos);
  CHECK(r.out.find("Ba 53.00") != std::string::npos);
  CHECK(r.out.find("BAS 0.65\n") != std::string::npos);
  const auto csv = slurp(dir.at("report.csv"));
  CHECK(csv.rfind("clip_id,Bg,Bt,Ba,BCS,BHS,BAS,PHE,GS\n", 0) == 0);
  CHECK(csv.find("0.646690") != std::string::npos);

  // a tolerance above the offset turns the 20 near misses into hits
  const auto loose = call({"evaluate", "--gen", dir.at("gen"), "--ref", dir.at("ref.mid"), "--tol", "0.3"});
  CHECK(loose.out.find("Ba 73.00") != std::string::npos);
}

TEST_CASE("evaluate rejects mismatched file counts") {
  TempDir dir("mismatch");
  codec::write_smf_file(dir.at("a.mid"), hits({0}));
  const auto r = call({"evaluate", "--gen", dir.at("a.mid"), dir.at("a.mid"), "--ref", dir.at("a.mid")});
  CHECK(r.code == kExitFailure);
}

TEST_CASE("make-synth, split and stats are deterministic") {
  TempDir dir("synth");
  REQUIRE(call({"make-synth", "--out", dir.at("a"), "--clips", "10", "--seed", "4"}).code == 0);
  REQUIRE(call({"make-synth", "--out", dir.at("b"), "--clips", "10", "--seed", "4"}).code == 0);
  CHECK(slurp(dir.at("a/manifest.json")) == slurp(dir.at("b/manifest.json")));
  CHECK(slurp(dir.at("a/clip0007.mid")) == slurp(dir.at("b/clip0007.mid")));
  CHECK(slurp(dir.at("a/clip0007.json")) == slurp(dir.at("b/clip0007.json")));

  const auto s1 = call({"split", "--manifest", dir.at("a/manifest.json"), "--out", dir.at("s1.json"), "--seed", "9"});
  const auto s2 = call({"split", "--manifest", dir.at("a/manifest.json"), "--out", dir.at("s2.json"), "--seed", "9"});
  REQUIRE(s1.code == 0);
  CHECK(s1.out == s2.out);
  CHECK(slurp(dir.at("s1.json")) == slurp(dir.at("s2.json")));

  const auto st = call({"stats", dir.at("a/manifest.json")});
  REQUIRE(st.code == 0);
  CHECK(st.out.find("clips 10") != std::string::npos);
}

TEST_CASE("train, generate and complete are reproducible with a seed") {
  TempDir dir("train");
  REQUIRE(call({"make-synth", "--out", dir.at("c"), "--clips", "10"}).code == 0);
  const std::string m = dir.at("c/manifest.json");
  for (const char* run : {"1", "2"}) {
    const std::string r(run);
    REQUIRE(call({"train-drum", "--corpus", m, "--out", dir.at("drum" + r), "--steps", "5", "--seed", "3"}).code == 0);
    REQUIRE(call({"train-bert", "--corpus", m, "--out", dir.at("bert" + r), "--steps", "5", "--seed", "3"}).code == 0);
    REQUIRE(call({"generate", "--ckpt", dir.at("drum" + r), "--skeleton", dir.at("c/clip0000.json"), "--out",
                  dir.at("gen" + r + ".mid"), "--seed", "3"})
                .code == 0);
    REQUIRE(call({"complete", "--ckpt", dir.at("bert" + r), "--drum", dir.at("gen" + r + ".mid"), "--out",
                  dir.at("full" + r + ".mid"), "--seed", "3"})
                .code == 0);
  }
  for (const std::string f : {"drum", "bert", "drum.loss.csv", "bert.loss.csv", "gen.mid", "full.mid"}) {
    const auto dot = f.find('.');
    const std::string a = dot == std::string::npos ? f + "1" : f.substr(0, dot) + "1" + f.substr(dot);
    const std::string b = dot == std::string::npos ? f + "2" : f.substr(0, dot) + "2" + f.substr(dot);
    CAPTURE(f);
    CHECK(slurp(dir.at(a)) == slurp(dir.at(b)));
  }
  const auto csv = slurp(dir.at("drum1.loss.csv"));
  CHECK(csv.rfind("step,lr,loss,token,beat\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);

  // a checkpoint of the wrong kind is refused
  const auto wrong = call({"complete", "--ckpt", dir.at("drum1"), "--drum", dir.at("gen1.mid"), "--out", dir.at("x.mid")});
  CHECK(wrong.code == kExitFailure);
  CHECK(wrong.err.find("bert") != std::string::npos);
}
