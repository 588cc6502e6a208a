#include "stepscore/tensor/tensor.hpp"

#include <unordered_set>

namespace stepscore::tensor {

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::from_node(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

std::string Tensor::shape_string() const {
  return "(" + std::to_string(rows()) + "x" + std::to_string(cols()) + ")";
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string());
  return node_->value(0, 0);
}

namespace {

Tensor record_impl(const char* op, Matrix value, const Tensor* begin, const Tensor* end,
                   std::function<void(Node&)> backprop) {
  if (!value.allFinite()) throw NumericError(std::string("non-finite value produced by ") + op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  for (auto it = begin; it != end; ++it) node->requires_grad = node->requires_grad || it->requires_grad();
  if (node->requires_grad) {
    node->inputs.reserve(static_cast<std::size_t>(end - begin));
    for (auto it = begin; it != end; ++it) node->inputs.push_back(it->node());
    node->backprop = std::move(backprop);
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace

Tensor record(const char* op, Matrix value, std::initializer_list<Tensor> inputs,
              std::function<void(Node&)> backprop) {
  return record_impl(op, std::move(value), inputs.begin(), inputs.end(), std::move(backprop));
}

Tensor record(const char* op, Matrix value, std::span<const Tensor> inputs,
              std::function<void(Node&)> backprop) {
  return record_impl(op, std::move(value), inputs.data(), inputs.data() + inputs.size(),
                     std::move(backprop));
}

void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("backward: loss must be a 1x1 tensor, got " + loss.shape_string());
  }
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && node->grad.size() != 0) node->backprop(*node);
  }
  // intermediate gradients are not needed after the pass
  for (Node* node : order) {
    if (!node->inputs.empty()) node->grad.resize(0, 0);
  }
}

}  // namespace stepscore::tensor
