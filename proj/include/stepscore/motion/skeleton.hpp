#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "stepscore/tensor/params.hpp"
#include "stepscore/tensor/tensor.hpp"

namespace stepscore::motion {

using tensor::Matrix;
using tensor::Rng;

class MotionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Edge = std::pair<int, int>;

/// Joint coordinates for T frames of J joints, stored (T·J)×3 with frame t,
/// joint j in row t·J + j.
struct Skeleton {
  double fps = 20.0;
  int joints = 0;
  Matrix frames;
  std::string genre;
  std::vector<int> beat_frames;
  std::vector<Edge> edges;  // bones; a chain 0-1-…-(J−1) when the file has none
  int root = 0;

  int frame_count() const { return joints == 0 ? 0 : static_cast<int>(frames.rows() / joints); }
};

/// JSON form: {"fps", "joints", "frames": [[[x,y,z] × J] × T], "genre",
/// "beat_frames", optional "edges": [[a,b], …], optional "root"}.
Skeleton parse_skeleton(const std::string& json_text);
Skeleton read_skeleton(const std::filesystem::path& path);
std::string to_json(const Skeleton& skeleton);
void write_skeleton(const std::filesystem::path& path, const Skeleton& skeleton);

std::vector<Edge> chain_edges(int joints);

/// Undirected skeleton graph with self loops. `adjacency` is the row
/// normalized D⁻¹(A + I), so every row sums to 1.
struct MotionGraph {
  int joints = 0;
  std::vector<Edge> edges;
  Matrix raw;        // A + I, symmetric 0/1
  Matrix adjacency;  // D⁻¹(A + I)

  static MotionGraph from_edges(int joints, const std::vector<Edge>& edges);
  static MotionGraph of(const Skeleton& skeleton) { return from_edges(skeleton.joints, skeleton.edges); }
};

/// Subtracts the root joint of each frame from every joint of that frame.
Matrix root_center(const Matrix& frames, int joints, int root);

/// Removes each joint's mean position over the clip and scales the result to
/// unit RMS, leaving only the motion. A motionless clip comes back as zeros.
Matrix motion_only(const Matrix& frames, int joints);

struct Affine {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double scale = 1.0;
  Eigen::RowVector3d translation = Eigen::RowVector3d::Zero();
};

struct AffineRange {
  double max_degrees = 15.0;
  double min_scale = 0.9;
  double max_scale = 1.1;
  double max_shift = 0.05;
};

Affine sample_affine(Rng& rng, const AffineRange& range = {});
/// p ↦ scale · R p + translation for every joint of every frame.
Matrix apply_affine(const Matrix& frames, const Affine& affine);
Matrix augment_affine(const Matrix& frames, Rng& rng, const AffineRange& range = {});

}  // namespace stepscore::motion
