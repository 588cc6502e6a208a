#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace stepscore::pipeline {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key/value settings. Text form: one `key = value` per line, `#`
/// starts a comment, blank lines are ignored. Every key must be one of the
/// preset keys, so a typo is an error rather than a silent default.
class Config {
 public:
  /// "full" (reference model sizes) or "desk" (small enough for one CPU core).
  static Config preset(const std::string& name);
  static std::vector<std::string> preset_names() { return {"full", "desk"}; }

  /// Applies `key = value` lines on top of the current values.
  void merge_text(const std::string& text, const std::string& origin = "config");
  void merge_file(const std::filesystem::path& path);
  /// One `key=value` override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string str(const std::string& key) const;
  int integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<int> integers(const std::string& key) const;  // comma-separated

  /// Sorted `key = value` lines; parsing it back gives an equal Config.
  std::string to_text() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace stepscore::pipeline
