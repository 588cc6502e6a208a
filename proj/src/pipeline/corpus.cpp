#include "stepscore/pipeline/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace stepscore::pipeline {

using nlohmann::json;

std::vector<std::pair<int, int>> sliding_window(int frames, int window, int stride,
                                                std::vector<std::string>* warnings) {
  if (window < 1 || stride < 1) throw std::invalid_argument("sliding window: window and stride must be positive");
  std::vector<std::pair<int, int>> out;
  if (frames < window) {
    if (warnings)
      warnings->push_back("sliding window: " + std::to_string(frames) + " frames is shorter than the window of " +
                          std::to_string(window));
    return out;
  }
  for (int start = 0; start + window <= frames; start += stride) out.emplace_back(start, start + window);
  return out;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("manifest: unknown split '" + name + "'");
}

std::vector<ClipRecord> CorpusManifest::select(Split s) const {
  std::vector<ClipRecord> out;
  for (const auto& c : clips)
    if (c.split == s) out.push_back(c);
  return out;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t CorpusManifest::hash() const { return fnv1a(to_json(*this)); }

CorpusManifest split(std::vector<ClipRecord> clips, std::uint64_t seed) {
  std::map<std::string, std::vector<ClipRecord>> by_genre;
  for (auto& c : clips) by_genre[c.genre].push_back(std::move(c));
  CorpusManifest m;
  m.seed = seed;
  for (auto& [genre, group] : by_genre) {
    std::sort(group.begin(), group.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    std::mt19937_64 rng(seed ^ fnv1a(genre));
    // Fisher-Yates with our own index draws so the result does not depend on
    // the standard library's shuffle
    for (std::size_t i = group.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(group[i - 1], group[j]);
    }
    const auto n = group.size();
    const auto train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
    const auto rest = n - train;
    const auto val = rest - rest / 2;
    for (std::size_t i = 0; i < n; ++i) {
      group[i].split = i < train ? Split::Train : (i < train + val ? Split::Val : Split::Test);
      m.clips.push_back(group[i]);
    }
  }
  std::sort(m.clips.begin(), m.clips.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return m;
}

std::string to_json(const CorpusManifest& m) {
  json doc;
  doc["seed"] = m.seed;
  doc["fps"] = m.fps;
  doc["window"] = m.window;
  doc["stride"] = m.stride;
  json clips = json::array();
  for (const auto& c : m.clips) {
    clips.push_back({{"id", c.id}, {"skeleton", c.skeleton}, {"midi", c.midi}, {"genre", c.genre},
                     {"split", split_name(c.split)}});
  }
  doc["clips"] = clips;
  return doc.dump(2);
}

CorpusManifest parse_manifest(const std::string& json_text) {
  CorpusManifest m;
  try {
    const json doc = json::parse(json_text);
    m.seed = doc.value("seed", std::uint64_t{0});
    m.fps = doc.value("fps", 20.0);
    m.window = doc.value("window", 600);
    m.stride = doc.value("stride", 40);
    for (const auto& c : doc.at("clips")) {
      ClipRecord r;
      r.id = c.at("id").get<std::string>();
      r.skeleton = c.at("skeleton").get<std::string>();
      r.midi = c.at("midi").get<std::string>();
      r.genre = c.value("genre", std::string());
      r.split = parse_split(c.value("split", std::string("train")));
      m.clips.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write " + path.string());
  out << to_json(manifest) << '\n';
}

std::filesystem::path resolve(const std::filesystem::path& manifest_path, const std::string& file) {
  const std::filesystem::path p(file);
  return p.is_absolute() ? p : manifest_path.parent_path() / p;
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto m = parse_manifest(buffer.str());
  for (const auto& c : m.clips) {
    for (const auto& f : {c.skeleton, c.midi}) {
      if (!std::filesystem::exists(resolve(path, f)))
        throw std::runtime_error("manifest: clip " + c.id + " references missing file " + f);
    }
  }
  return m;
}

}  // namespace stepscore::pipeline
