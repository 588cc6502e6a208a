#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace stepscore::pipeline {

/// Window (start, end) pairs over `frames`: starts 0, stride, 2·stride, …
/// Shorter input yields no windows and a warning.
std::vector<std::pair<int, int>> sliding_window(int frames, int window = 600, int stride = 40,
                                                std::vector<std::string>* warnings = nullptr);

enum class Split { Train, Val, Test };
const char* split_name(Split s);
Split parse_split(const std::string& name);

struct ClipRecord {
  std::string id;
  std::string skeleton;  // path, relative to the manifest directory when not absolute
  std::string midi;
  std::string genre;
  Split split = Split::Train;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  double fps = 20.0;
  int window = 600;
  int stride = 40;
  std::vector<ClipRecord> clips;

  std::vector<ClipRecord> select(Split s) const;
  /// FNV-1a over the canonical JSON text.
  std::uint64_t hash() const;
};

/// Per genre: clips sorted by id, shuffled with `seed`, then the first 80%
/// (rounded) go to train and the rest split evenly between val and test,
/// val taking the extra one.
CorpusManifest split(std::vector<ClipRecord> clips, std::uint64_t seed);

std::string to_json(const CorpusManifest& manifest);
CorpusManifest parse_manifest(const std::string& json_text);
void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
/// Loads and checks that every referenced file exists.
CorpusManifest read_manifest(const std::filesystem::path& path);

/// Path of a record's file resolved against the manifest directory.
std::filesystem::path resolve(const std::filesystem::path& manifest_path, const std::string& file);

std::uint64_t fnv1a(const std::string& bytes);

}  // namespace stepscore::pipeline
