#include "stepscore/motion/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Geometry>

#include "json.hpp"

namespace stepscore::motion {

using nlohmann::json;

std::vector<Edge> chain_edges(int joints) {
  std::vector<Edge> edges;
  for (int j = 1; j < joints; ++j) edges.emplace_back(j - 1, j);
  return edges;
}

Skeleton parse_skeleton(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw MotionError(std::string("skeleton: invalid JSON: ") + e.what());
  }
  Skeleton s;
  try {
    s.fps = doc.value("fps", 20.0);
    s.joints = doc.at("joints").get<int>();
    s.genre = doc.value("genre", std::string());
    s.beat_frames = doc.value("beat_frames", std::vector<int>{});
    s.root = doc.value("root", 0);
    if (doc.contains("edges")) {
      for (const auto& e : doc.at("edges")) s.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    } else {
      s.edges = chain_edges(s.joints);
    }
    const auto& frames = doc.at("frames");
    if (s.joints < 1) throw MotionError("skeleton: joints must be positive");
    if (frames.empty()) throw MotionError("skeleton: no frames");
    s.frames.resize(static_cast<Eigen::Index>(frames.size()) * s.joints, 3);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      if (frames[t].size() != static_cast<std::size_t>(s.joints)) {
        throw MotionError("skeleton: frame " + std::to_string(t) + " has " + std::to_string(frames[t].size()) +
                          " joints, expected " + std::to_string(s.joints));
      }
      for (int j = 0; j < s.joints; ++j) {
        const auto& p = frames[t][static_cast<std::size_t>(j)];
        if (p.size() != 3) throw MotionError("skeleton: joint coordinates must have 3 values");
        for (int c = 0; c < 3; ++c) {
          const double v = p[static_cast<std::size_t>(c)].get<double>();
          if (!std::isfinite(v)) throw MotionError("skeleton: non-finite coordinate in frame " + std::to_string(t));
          s.frames(static_cast<Eigen::Index>(t) * s.joints + j, c) = v;
        }
      }
    }
  } catch (const json::exception& e) {
    throw MotionError(std::string("skeleton: ") + e.what());
  }
  const int frames = s.frame_count();
  for (int b : s.beat_frames)
    if (b < 0 || b >= frames) throw MotionError("skeleton: beat frame " + std::to_string(b) + " outside clip");
  if (s.root < 0 || s.root >= s.joints) throw MotionError("skeleton: root joint out of range");
  for (const auto& [a, b] : s.edges)
    if (a < 0 || b < 0 || a >= s.joints || b >= s.joints) throw MotionError("skeleton: edge joint out of range");
  return s;
}

Skeleton read_skeleton(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MotionError("skeleton: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_skeleton(buffer.str());
}

std::string to_json(const Skeleton& s) {
  json doc;
  doc["fps"] = s.fps;
  doc["joints"] = s.joints;
  doc["genre"] = s.genre;
  doc["beat_frames"] = s.beat_frames;
  doc["root"] = s.root;
  json edges = json::array();
  for (const auto& [a, b] : s.edges) edges.push_back({a, b});
  doc["edges"] = edges;
  json frames = json::array();
  for (int t = 0; t < s.frame_count(); ++t) {
    json frame = json::array();
    for (int j = 0; j < s.joints; ++j) {
      const auto row = s.frames.row(static_cast<Eigen::Index>(t) * s.joints + j);
      frame.push_back({row(0), row(1), row(2)});
    }
    frames.push_back(frame);
  }
  doc["frames"] = frames;
  return doc.dump();
}

void write_skeleton(const std::filesystem::path& path, const Skeleton& skeleton) {
  std::ofstream out(path);
  if (!out) throw MotionError("skeleton: cannot write " + path.string());
  out << to_json(skeleton) << '\n';
}

MotionGraph MotionGraph::from_edges(int joints, const std::vector<Edge>& edges) {
  if (joints < 1) throw MotionError("graph: joints must be positive");
  MotionGraph g;
  g.joints = joints;
  g.edges = edges;
  g.raw = Matrix::Identity(joints, joints);
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= joints || b >= joints) throw MotionError("graph: edge joint out of range");
    g.raw(a, b) = 1.0;
    g.raw(b, a) = 1.0;
  }
  g.adjacency = g.raw;
  for (Eigen::Index r = 0; r < joints; ++r) g.adjacency.row(r) /= g.raw.row(r).sum();
  return g;
}

Matrix root_center(const Matrix& frames, int joints, int root) {
  Matrix out = frames;
  const Eigen::Index count = frames.rows() / joints;
  for (Eigen::Index t = 0; t < count; ++t) {
    const Eigen::RowVector3d origin = frames.row(t * joints + root);
    for (int j = 0; j < joints; ++j) out.row(t * joints + j) -= origin;
  }
  return out;
}

Matrix motion_only(const Matrix& frames, int joints) {
  Matrix out = frames;
  const Eigen::Index count = frames.rows() / joints;
  if (count == 0) return out;
  for (int j = 0; j < joints; ++j) {
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (Eigen::Index t = 0; t < count; ++t) mean += frames.row(t * joints + j);
    mean /= static_cast<double>(count);
    for (Eigen::Index t = 0; t < count; ++t) out.row(t * joints + j) -= mean;
  }
  const double rms = std::sqrt(out.squaredNorm() / static_cast<double>(out.size()));
  if (rms > 1e-12) out /= rms;
  return out;
}

Affine sample_affine(Rng& rng, const AffineRange& range) {
  const double max_rad = range.max_degrees * std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> angle(-max_rad, max_rad);
  std::uniform_real_distribution<double> scale(range.min_scale, range.max_scale);
  std::uniform_real_distribution<double> shift(-range.max_shift, range.max_shift);
  Affine a;
  const double ax = angle(rng);
  const double ay = angle(rng);
  const double az = angle(rng);
  a.rotation = (Eigen::AngleAxisd(az, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(ay, Eigen::Vector3d::UnitY()) *
                Eigen::AngleAxisd(ax, Eigen::Vector3d::UnitX()))
                   .toRotationMatrix();
  a.scale = scale(rng);
  for (int c = 0; c < 3; ++c) a.translation(c) = shift(rng);
  return a;
}

Matrix apply_affine(const Matrix& frames, const Affine& affine) {
  Matrix out = affine.scale * (frames * affine.rotation.transpose());
  out.rowwise() += affine.translation;
  return out;
}

Matrix augment_affine(const Matrix& frames, Rng& rng, const AffineRange& range) {
  return apply_affine(frames, sample_affine(rng, range));
}

}  // namespace stepscore::motion
