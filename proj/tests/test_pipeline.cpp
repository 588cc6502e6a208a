#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "stepscore/codec/smf.hpp"
#include "stepscore/metrics/metrics.hpp"
#include "stepscore/pipeline/corpus.hpp"
#include "stepscore/pipeline/synthetic.hpp"
#include "support.hpp"

using namespace stepscore;
using namespace stepscore::pipeline;

namespace fs = std::filesystem;

namespace {

std::vector<ClipRecord> records(int per_genre, const std::vector<std::string>& genres) {
  std::vector<ClipRecord> out;
  for (const auto& g : genres)
    for (int i = 0; i < per_genre; ++i) {
      const std::string id = g + std::to_string(i);
      out.push_back({id, id + ".json", id + ".mid", g, Split::Train});
    }
  return out;
}

}  // namespace

TEST_CASE("sliding window") {
  CHECK(sliding_window(600) == std::vector<std::pair<int, int>>{{0, 600}});
  CHECK(sliding_window(680) == std::vector<std::pair<int, int>>{{0, 600}, {40, 640}, {80, 680}});
  CHECK(sliding_window(719).size() == 3);
  CHECK(sliding_window(720).size() == 4);
  std::vector<std::string> warnings;
  CHECK(sliding_window(599, 600, 40, &warnings).empty());
  CHECK(warnings.size() == 1);
  // stride 40 frames is 2 s at 20 fps
  CHECK(40 / 20.0 == 2.0);
}

TEST_CASE("split") {
  SUBCASE("ten clips of one genre") {
    const auto m = split(records(10, {"pop"}), 3);
    CHECK(m.select(Split::Train).size() == 8);
    CHECK(m.select(Split::Val).size() == 1);
    CHECK(m.select(Split::Test).size() == 1);
  }
  SUBCASE("same seed, same hash; other seed, other split") {
    const auto in = records(10, {"pop", "jazz"});
    CHECK(split(in, 5).hash() == split(in, 5).hash());
    auto reversed = in;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(split(reversed, 5).hash() == split(in, 5).hash());
    CHECK(split(in, 6).hash() != split(in, 5).hash());
  }
  SUBCASE("partition of random corpora") {
    tensor::Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::string> genres;
      const int g = 1 + static_cast<int>(rng() % 4);
      for (int i = 0; i < g; ++i) genres.push_back("g" + std::to_string(i));
      const auto in = records(1 + static_cast<int>(rng() % 25), genres);
      const auto m = split(in, rng());
      std::multiset<std::string> seen;
      for (auto s : {Split::Train, Split::Val, Split::Test})
        for (const auto& r : m.select(s)) seen.insert(r.id);
      std::multiset<std::string> expected;
      for (const auto& r : in) expected.insert(r.id);
      CHECK(seen == expected);
      for (const auto& genre : genres) {
        int n = 0;
        int train = 0;
        int val = 0;
        for (const auto& r : m.clips)
          if (r.genre == genre) {
            ++n;
            train += r.split == Split::Train;
            val += r.split == Split::Val;
          }
        CHECK(train == static_cast<int>(std::llround(0.8 * n)));
        CHECK(val - (n - train - val) >= 0);
        CHECK(val - (n - train - val) <= 1);
      }
    }
  }
  SUBCASE("manifest JSON round trip") {
    auto m = split(records(10, {"pop"}), 3);
    m.fps = 30;
    const auto back = parse_manifest(to_json(m));
    CHECK(back.hash() == m.hash());
    CHECK(back.fps == 30);
    CHECK_THROWS(parse_manifest("{\"clips\": 3}"));
    CHECK_THROWS(parse_split("holdout"));
  }
}

TEST_CASE("synthetic corpus") {
  SyntheticSpec spec;
  spec.clips = 6;
  const auto clips = make_synthetic(spec);
  REQUIRE(clips.size() == 6);

  SUBCASE("drum onsets every half second on the planted beats") {
    for (const auto& c : clips) {
      const auto& beats = c.skeleton.beat_frames;
      REQUIRE(beats.size() >= 2);
      for (std::size_t i = 1; i < beats.size(); ++i) CHECK(beats[i] - beats[i - 1] == 10);
      std::vector<double> onsets;
      for (const auto& n : codec::select_drums(c.notes)) onsets.push_back(n.onset / 480.0 * 0.5);
      REQUIRE(onsets.size() == beats.size());
      for (std::size_t i = 0; i < beats.size(); ++i) CHECK(std::abs(onsets[i] - beats[i] / 20.0) < 1e-9);
    }
  }
  SUBCASE("echo track one slot later, an octave up") {
    for (const auto& c : clips) {
      const auto drums = codec::select_drums(c.notes);
      const auto echo = codec::select_non_drums(c.notes);
      REQUIRE(echo.size() == drums.size());
      for (std::size_t i = 0; i < drums.size(); ++i) {
        CHECK(echo[i].onset == drums[i].onset + 30);
        CHECK(echo[i].pitch == drums[i].pitch + 12);
        CHECK(echo[i].instrument == 32);
      }
    }
  }
  SUBCASE("genres alternate and differ in smoothness") {
    CHECK(clips[0].skeleton.genre == "smooth");
    CHECK(clips[1].skeleton.genre == "jerky");
  }
  SUBCASE("deterministic") {
    const auto again = make_synthetic(spec);
    for (std::size_t i = 0; i < clips.size(); ++i) {
      CHECK(again[i].notes == clips[i].notes);
      CHECK(again[i].skeleton.frames == clips[i].skeleton.frames);
    }
  }
  SUBCASE("self-evaluation against the planted beats") {
    for (const auto& c : clips) {
      const auto bytes = codec::write_smf(c.notes);
      const auto smf = codec::parse_smf(bytes);
      const auto report = metrics::evaluate_pair(c.id, smf, smf, &c.skeleton.beat_frames);
      CHECK(report.bas == doctest::Approx(1.0));
    }
  }
  SUBCASE("written to disk") {
    const fs::path dir = fs::temp_directory_path() / "stepscore_test_synth";
    fs::remove_all(dir);
    spec.clips = 2;
    const auto ids = write_synthetic(spec, dir);
    REQUIRE(ids.size() == 2);
    const auto skel = motion::read_skeleton(dir / (ids[0] + ".json"));
    CHECK(skel.frames == clips[0].skeleton.frames);
    CHECK(codec::read_smf_file(dir / (ids[0] + ".mid")).notes == clips[0].notes);
    fs::remove_all(dir);
  }
}
