#include "stepscore/pipeline/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace stepscore::pipeline {

namespace {

// key, full value, desk value
struct Row {
  const char* key;
  const char* full;
  const char* desk;
};

constexpr Row kRows[] = {
    {"seed", "1", "1"},
    {"fps", "20", "20"},
    {"window", "600", "80"},
    {"stride", "40", "40"},
    {"bpm", "120", "120"},
    {"augment", "1", "1"},

    {"motion.channels", "64,64,64,128,128,128,256,256,256", "8,8,8,16,16,16,32,32,32"},
    {"motion.out", "512", "32"},
    {"motion.kernel", "9", "9"},
    {"beat.layers", "2", "1"},
    {"beat.heads", "8", "4"},
    {"beat.hidden", "1024", "64"},
    {"beat.class_weight", "1.5", "1.5"},

    {"style.blocks", "4", "2"},
    {"style.channels", "64", "16"},
    {"style.kernel", "9", "5"},
    {"style.gru_hidden", "64", "32"},
    {"style.embedding", "32", "32"},
    {"style.mlp_hidden", "64", "16"},
    {"style.steps", "60000", "6000"},
    {"style.batch", "1", "1"},
    {"style.lr", "0.0007", "0.003"},
    {"style.warmup", "6000", "100"},

    {"drum.d_model", "512", "32"},
    {"drum.heads", "8", "4"},
    {"drum.blocks", "6", "2"},
    {"drum.encoder_blocks", "6", "1"},
    {"drum.hidden", "1024", "64"},
    {"drum.max_length", "2048", "256"},
    {"drum.relative_clip", "128", "16"},
    {"drum.steps", "100000", "3000"},
    {"drum.batch", "1", "1"},
    {"drum.lr", "0.0007", "0.001"},
    {"drum.warmup", "6000", "100"},

    {"bert.hidden", "768", "32"},
    {"bert.layers", "12", "2"},
    {"bert.heads", "12", "4"},
    {"bert.ff", "3072", "64"},
    {"bert.max_length", "4096", "512"},
    {"bert.relative_clip", "128", "16"},
    {"bert.mask_rate", "0.15", "0.15"},
    {"bert.completion_share", "0.5", "0.7"},
    {"bert.steps", "100000", "10000"},
    {"bert.batch", "1", "1"},
    {"bert.lr", "0.0007", "0.001"},
    {"bert.warmup", "6000", "100"},

    {"adam.beta1", "0.9", "0.9"},
    {"adam.beta2", "0.9", "0.9"},
    {"adam.eps", "1e-9", "1e-9"},

    {"generate.temperature", "1.0", "1.0"},
    {"generate.top_k", "16", "16"},
    {"complete.temperature", "0", "0"},
    {"complete.top_k", "0", "0"},
    {"complete.fraction", "0.1", "0.1"},
    {"eval.tolerance", "0.1", "0.1"},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::preset(const std::string& name) {
  if (name != "full" && name != "desk") throw ConfigError("config: unknown preset '" + name + "'");
  Config c;
  for (const auto& row : kRows) c.values_[row.key] = name == "full" ? row.full : row.desk;
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second = value;
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      set(line);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  merge_text(text.str(), path.string());
}

std::string Config::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
  return it->second;
}

int Config::integer(const std::string& key) const {
  const std::string v = str(key);
  int out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError("config: " + key + " is not an integer: '" + v + "'");
  return out;
}

double Config::real(const std::string& key) const {
  const std::string v = str(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: " + key + " is not a number: '" + v + "'");
}

bool Config::flag(const std::string& key) const {
  const std::string v = str(key);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config: " + key + " is not 0/1: '" + v + "'");
}

std::vector<int> Config::integers(const std::string& key) const {
  std::vector<int> out;
  std::istringstream in(str(key));
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    int v = 0;
    const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || end != part.data() + part.size())
      throw ConfigError("config: " + key + " is not a list of integers: '" + str(key) + "'");
    out.push_back(v);
  }
  return out;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace stepscore::pipeline
