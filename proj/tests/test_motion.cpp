#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "stepscore/motion/encoder.hpp"
#include "stepscore/pipeline/synthetic.hpp"
#include "stepscore/tensor/gradcheck.hpp"
#include "stepscore/tensor/ops.hpp"

using namespace stepscore;
using namespace stepscore::motion;
using tensor::Tensor;

namespace {

StgcnConfig tiny_stgcn() { return {{4, 4, 6}, 8, 3}; }

Matrix random_frames(int frames, int joints, Rng& rng) { return tensor::normal(frames * joints, 3, 1.0, rng); }

// Rows of a (T·J)×C matrix reordered so new joint j is old joint perm[j].
Matrix permute_joints(const Matrix& x, const std::vector<int>& perm) {
  const auto joints = static_cast<Eigen::Index>(perm.size());
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows() / joints; ++t)
    for (Eigen::Index j = 0; j < joints; ++j) out.row(t * joints + j) = x.row(t * joints + perm[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace

TEST_CASE("skeleton JSON round trip and validation") {
  const auto clip = pipeline::make_synthetic_clip({}, 3);
  const auto back = parse_skeleton(to_json(clip.skeleton));
  CHECK(back.joints == 7);
  CHECK(back.frame_count() == 80);
  CHECK(back.frames == clip.skeleton.frames);
  CHECK(back.beat_frames == clip.skeleton.beat_frames);
  CHECK(back.edges == clip.skeleton.edges);
  CHECK(back.genre == clip.skeleton.genre);

  CHECK_THROWS_AS(parse_skeleton("{\"joints\":2,\"frames\":[[[0,0,0]]]}"), MotionError);
  CHECK_THROWS_AS(parse_skeleton("{\"joints\":1,\"frames\":[]}"), MotionError);
  CHECK_THROWS_AS(parse_skeleton("{\"joints\":1,\"frames\":[[[0,0,0]]],\"beat_frames\":[4]}"), MotionError);
  CHECK_THROWS_AS(parse_skeleton("not json"), MotionError);
  const auto chain = parse_skeleton("{\"joints\":3,\"frames\":[[[0,0,0],[1,0,0],[2,0,0]]]}");
  CHECK(chain.edges == chain_edges(3));
  CHECK(chain.fps == 20.0);
}

TEST_CASE("motion graph adjacency") {
  const auto g = MotionGraph::from_edges(7, pipeline::synthetic_edges());
  CHECK(g.raw == g.raw.transpose());
  for (Eigen::Index r = 0; r < 7; ++r) CHECK(g.adjacency.row(r).sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.raw.diagonal().isOnes());
  CHECK_THROWS_AS(MotionGraph::from_edges(2, {{0, 5}}), MotionError);
}

TEST_CASE("graph conv on a two-node path matches the hand computation") {
  // A + I = [[1,1],[1,1]], D⁻¹(A+I) = 0.5 everywhere, so both joints get the mean
  const auto g = MotionGraph::from_edges(2, {{0, 1}});
  ParamStore store;
  Rng rng(1);
  nn::Linear w(store, "w", 3, 1, rng);
  w.weight.mutable_value() << 1.0, 2.0, 3.0;
  w.bias.mutable_value() << 0.5;
  Matrix x(2, 3);
  x << 1, 0, 0, 0, 1, 1;
  const auto y = graph_conv(Tensor::constant(x), g.adjacency, w);
  // mean row = (0.5, 0.5, 0.5) → 0.5 + 1 + 1.5 + 0.5 bias
  CHECK(y.value()(0, 0) == doctest::Approx(3.5));
  CHECK(y.value()(1, 0) == doctest::Approx(3.5));
}

TEST_CASE("st-gcn preserves T and is invariant to consistent joint relabeling") {
  Rng rng(2);
  ParamStore store;
  const Stgcn net(store, "m", tiny_stgcn(), rng);
  const auto g = MotionGraph::from_edges(7, pipeline::synthetic_edges());
  const Matrix x = random_frames(9, 7, rng);
  const auto out = net(Tensor::constant(x), g);
  CHECK(out.rows() == 9);
  CHECK(out.cols() == 8);

  const std::vector<int> perm{3, 0, 6, 1, 5, 2, 4};  // new j ← old perm[j]
  std::vector<int> inverse(7);
  for (int j = 0; j < 7; ++j) inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])] = j;
  std::vector<Edge> edges;
  for (auto [a, b] : pipeline::synthetic_edges()) edges.emplace_back(inverse[static_cast<std::size_t>(a)], inverse[static_cast<std::size_t>(b)]);
  const auto pg = MotionGraph::from_edges(7, edges);
  const auto permuted = net(Tensor::constant(permute_joints(x, perm)), pg);
  CHECK((permuted.value() - out.value()).cwiseAbs().maxCoeff() < 1e-12);

  const auto zero1 = net(Tensor::constant(Matrix::Zero(9 * 7, 3)), g);
  const auto zero2 = net(Tensor::constant(Matrix::Zero(9 * 7, 3)), g);
  CHECK(zero1.value() == zero2.value());
  CHECK_THROWS_AS(net(Tensor::constant(Matrix::Zero(10, 3)), g), tensor::ShapeError);
}

TEST_CASE("full-scale st-gcn layout") {
  const StgcnConfig c;
  CHECK(c.channels == std::vector<int>{64, 64, 64, 128, 128, 128, 256, 256, 256});
  CHECK(c.out == 512);
  CHECK(c.kernel == 9);
  const StyleConfig s;
  CHECK(s.blocks == 4);
  CHECK(s.embedding == 32);
  CHECK(s.genres == 6);
}

TEST_CASE("beat head and thresholding") {
  Rng rng(3);
  ParamStore store;
  const BeatHead head(store, "b", 8, {1, 2, 16}, rng);
  const auto logits = head(Tensor::constant(tensor::normal(12, 8, 1.0, rng)));
  CHECK(logits.rows() == 12);
  CHECK(logits.cols() == 2);
  Matrix l(3, 2);
  l << 0.0, 1.0, 1.0, 0.0, 0.5, 0.5;
  CHECK(threshold_beats(l) == std::vector<int>{1, 0, 0});
  CHECK(beat_indicator({0, 3}, 5) == std::vector<int>{1, 0, 0, 1, 0});

  const auto s = frame_scores({1, 0, 1, 0}, {1, 1, 0, 0});
  CHECK(s.precision == 0.5);
  CHECK(s.recall == 0.5);
  CHECK(s.f1 == 0.5);
  CHECK(frame_scores({0, 0}, {0, 0}).f1 == 1.0);
}

TEST_CASE("beat loss weights the beat class") {
  Matrix z = Matrix::Zero(4, 2);
  const auto logits = Tensor::constant(z);
  const std::vector<int> labels{1, 0, 0, 0};
  CHECK(beat_loss(logits, labels, 1.0).item() == doctest::Approx(std::log(2.0)));
  CHECK(beat_loss(logits, labels, 3.0).item() == doctest::Approx(6.0 / 4.0 * std::log(2.0)));
}

TEST_CASE("style branch: 32-dim embedding, translation invariance, purity") {
  Rng rng(4);
  ParamStore store;
  StyleConfig config;
  config.channels = 6;
  config.kernel = 3;
  config.gru_hidden = 5;
  config.mlp_hidden = 7;
  const StyleBranch style(store, "style", config, rng);
  const auto g = MotionGraph::from_edges(7, pipeline::synthetic_edges());
  for (int frames : {1, 5, 17}) {
    const Matrix x = random_frames(frames, 7, rng);
    const auto out = style(x, g, 0);
    CHECK(out.embedding.cols() == 32);
    CHECK(out.embedding.rows() == 1);
    CHECK(out.logits.cols() == 6);
    Matrix shifted = x;
    shifted.rowwise() += Eigen::RowVector3d(3.0, -2.0, 0.5);
    const auto moved = style(shifted, g, 0);
    CHECK((moved.logits.value() - out.logits.value()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(style(x, g, 0).embedding.value() == out.embedding.value());
  }
}

TEST_CASE("fusion is per-frame and local") {
  Rng rng(5);
  ParamStore store;
  const Fusion fuse(store, "f", 32, 16, rng);
  const auto zs = Tensor::constant(tensor::normal(1, 32, 1.0, rng));
  const auto flat = fuse({0, 0, 0, 0}, zs);
  CHECK(flat.rows() == 4);
  CHECK(flat.cols() == 16);
  for (Eigen::Index t = 1; t < 4; ++t) CHECK(flat.value().row(t) == flat.value().row(0));
  const auto one = fuse({0, 0, 1, 0}, zs);
  for (Eigen::Index t = 0; t < 4; ++t) CHECK((one.value().row(t) == flat.value().row(t)) == (t != 2));
  CHECK(flat.value().row(0).norm() > 0.0);
  CHECK(std::isfinite(flat.value().row(0).norm()));

  // only the direction of the style embedding matters, up to an offset and
  // the normaliser's epsilon
  const auto bigger = Tensor::constant(zs.value() * 40.0 + Matrix::Constant(1, 32, 3.0));
  CHECK((fuse({0, 0, 1, 0}, bigger).value() - one.value()).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("affine augmentation") {
  Rng rng(6);
  const auto clip = pipeline::make_synthetic_clip({}, 0);
  const Matrix& x = clip.skeleton.frames;
  CHECK(apply_affine(x, Affine{}) == x);

  Rng a(11);
  Rng b(11);
  CHECK(augment_affine(x, a) == augment_affine(x, b));

  const auto affine = sample_affine(rng);
  CHECK(affine.scale >= 0.9);
  CHECK(affine.scale <= 1.1);
  CHECK(affine.translation.cwiseAbs().maxCoeff() <= 0.05);
  CHECK((affine.rotation * affine.rotation.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  const Matrix y = apply_affine(x, affine);
  for (auto [p, q] : clip.skeleton.edges) {
    for (int t = 0; t < 80; t += 13) {
      const double before = (x.row(t * 7 + p) - x.row(t * 7 + q)).norm();
      const double after = (y.row(t * 7 + p) - y.row(t * 7 + q)).norm();
      CHECK(after == doctest::Approx(affine.scale * before).epsilon(1e-12));
    }
  }
}

TEST_CASE("root centering") {
  Matrix x(4, 3);
  x << 1, 1, 1, 2, 3, 4, 5, 5, 5, 6, 6, 6;
  const Matrix c = root_center(x, 2, 0);
  CHECK(c.row(0).isZero());
  CHECK(c.row(1) == Eigen::RowVector3d(1, 2, 3));
  CHECK(c.row(3) == Eigen::RowVector3d(1, 1, 1));
}

TEST_CASE("full context encoder passes finite differences on a 2-frame 3-joint miniature") {
  Rng rng(7);
  ParamStore store;
  ContextConfig config;
  config.stgcn = {{3, 4}, 6, 3};
  config.beat = {1, 2, 8};
  config.style = {1, 3, 3, 4, 32, 5, 2};
  config.d_model = 6;
  const ContextEncoder encoder(store, "motion", config, rng);
  const auto g = MotionGraph::from_edges(3, chain_edges(3));
  const Matrix x = random_frames(2, 3, rng);
  const std::vector<int> beats{1, 0};
  const Tensor probe = Tensor::constant(tensor::normal(2, 6, 1.0, rng));
  // some recurrent-weight gradients are near 1e-6, where roundoff in the
  // differences reaches 1e-10; the floor keeps those entries absolute
  std::vector<Tensor> leaves;
  for (auto& e : store.entries()) leaves.push_back(e.param);
  const auto result = tensor::check_gradients(
      [&] {
        const auto out = encoder(x, g, 0, &beats);
        return tensor::add(tensor::sum(tensor::mul(out.z, probe)),
                           tensor::add(beat_loss(out.beat_logits, beats, 2.0), tensor::sum(out.style.logits)));
      },
      leaves, 1e-5, 48, 1e-5);
  INFO(result.worst << " " << result.max_rel_error);
  CHECK(result.passed(1e-5));
}

TEST_CASE("motion_only keeps the motion and drops pose, position and size") {
  Rng rng(9);
  const Matrix x = random_frames(5, 3, rng);
  const Matrix m = motion_only(x, 3);
  for (int j = 0; j < 3; ++j) {
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (int t = 0; t < 5; ++t) mean += m.row(t * 3 + j);
    CHECK(mean.norm() < 1e-12);
  }
  CHECK(std::sqrt(m.squaredNorm() / static_cast<double>(m.size())) == doctest::Approx(1.0));
  Matrix moved = 3.0 * x;
  moved.rowwise() += Eigen::RowVector3d(1, -2, 5);
  CHECK((motion_only(moved, 3) - m).cwiseAbs().maxCoeff() < 1e-12);
  Matrix still(6, 3);
  still << 1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 2, 3, 4, 5, 6, 7, 8, 9;
  CHECK(motion_only(still, 3).isZero());
}
