#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stepscore::tensor {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A vertex of the recorded computation. Leaves have no inputs.
struct Node {
  Matrix value;
  Matrix grad;  // empty until backward reaches the node
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;
  bool requires_grad = false;
  const char* op = "leaf";

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
  Node& input(std::size_t i) { return *inputs[i]; }
};

/// Rank-2 row-major tensor with reverse-mode differentiation. Copies share the
/// underlying node, so a parameter handle stays valid in every module that
/// holds it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  /// In-place edits are for optimizers and finite differences only.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::string shape_string() const;
  double item() const;

  void zero_grad() { node_->grad.resize(0, 0); }
  const std::shared_ptr<Node>& node() const { return node_; }

  static Tensor from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

/// Records an op result. The backprop closure is dropped when no input needs
/// a gradient. Throws NumericError when the value holds NaN or Inf.
Tensor record(const char* op, Matrix value, std::initializer_list<Tensor> inputs,
              std::function<void(Node&)> backprop);
Tensor record(const char* op, Matrix value, std::span<const Tensor> inputs,
              std::function<void(Node&)> backprop);

/// Accumulates d(loss)/d(node) into every node that requires a gradient.
/// Order is a deterministic reverse topological walk from `loss`.
void backward(const Tensor& loss);

}  // namespace stepscore::tensor
