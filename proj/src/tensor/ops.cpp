#include "stepscore/tensor/ops.hpp"

#include <cmath>

#include "stepscore/tensor/dense.hpp"

namespace stepscore::tensor {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string shapes(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), shapes("matmul (a.cols vs b.rows)", a, b));
  return record("matmul", a.value() * b.value(), {a, b}, [](Node& n) {
    Node& x = n.input(0);
    Node& y = n.input(1);
    if (x.requires_grad) x.accumulate(n.grad * y.value.transpose());
    if (y.requires_grad) y.accumulate(x.value.transpose() * n.grad);
  });
}

Tensor transpose(const Tensor& a) {
  return record("transpose", a.value().transpose(), {a},
                [](Node& n) { n.input(0).accumulate(n.grad.transpose()); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), shapes("add", a, b));
  return record("add", a.value() + b.value(), {a, b}, [](Node& n) {
    if (n.input(0).requires_grad) n.input(0).accumulate(n.grad);
    if (n.input(1).requires_grad) n.input(1).accumulate(n.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), shapes("sub", a, b));
  return record("sub", a.value() - b.value(), {a, b}, [](Node& n) {
    if (n.input(0).requires_grad) n.input(0).accumulate(n.grad);
    if (n.input(1).requires_grad) n.input(1).accumulate(-n.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), shapes("mul", a, b));
  return record("mul", a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    Node& x = n.input(0);
    Node& y = n.input(1);
    if (x.requires_grad) x.accumulate(n.grad.cwiseProduct(y.value));
    if (y.requires_grad) y.accumulate(n.grad.cwiseProduct(x.value));
  });
}

Tensor scale(const Tensor& a, double s) {
  return record("scale", a.value() * s, {a}, [s](Node& n) { n.input(0).accumulate(n.grad * s); });
}

Tensor affine(const Tensor& a, double s, double shift) {
  Matrix v = (a.value().array() * s + shift).matrix();
  return record("affine", std::move(v), {a}, [s](Node& n) { n.input(0).accumulate(n.grad * s); });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), shapes("add_row", a, row));
  Matrix v = a.value().rowwise() + row.value().row(0);
  return record("add_row", std::move(v), {a, row}, [](Node& n) {
    if (n.input(0).requires_grad) n.input(0).accumulate(n.grad);
    if (n.input(1).requires_grad) n.input(1).accumulate(n.grad.colwise().sum());
  });
}

Tensor broadcast_rows(const Tensor& row, Eigen::Index m) {
  require(row.rows() == 1, "broadcast_rows: expected a 1xn row, got " + row.shape_string());
  Matrix v = row.value().replicate(m, 1);
  return record("broadcast_rows", std::move(v), {row},
                [](Node& n) { n.input(0).accumulate(n.grad.colwise().sum()); });
}

Tensor relu(const Tensor& a) {
  Matrix v = a.value().cwiseMax(0.0);
  return record("relu", std::move(v), {a}, [](Node& n) {
    n.input(0).accumulate((n.input(0).value.array() > 0.0).cast<double>().matrix().cwiseProduct(n.grad));
  });
}

Tensor tanh(const Tensor& a) {
  Matrix v = a.value().array().tanh().matrix();
  return record("tanh", std::move(v), {a}, [](Node& n) {
    n.input(0).accumulate(((1.0 - n.value.array().square()) * n.grad.array()).matrix());
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return record("sigmoid", std::move(v), {a}, [](Node& n) {
    n.input(0).accumulate((n.value.array() * (1.0 - n.value.array()) * n.grad.array()).matrix());
  });
}

Tensor softmax_rows(const Tensor& a, const BoolMatrix* allowed) {
  Matrix v;
  if (allowed != nullptr) {
    require(allowed->rows() == a.rows() && allowed->cols() == a.cols(),
            "softmax_rows: mask shape does not match " + a.shape_string());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      require(allowed->row(r).any(), "softmax_rows: row " + std::to_string(r) + " is fully masked");
    }
    v = dense::masked_softmax_rows(a.value(), *allowed);
  } else {
    v = dense::softmax_rows(a.value());
  }
  return record("softmax_rows", std::move(v), {a}, [](Node& n) {
    const Eigen::VectorXd dot = n.grad.cwiseProduct(n.value).rowwise().sum();
    Matrix g = n.value.cwiseProduct(n.grad.colwise() - dot);
    n.input(0).accumulate(g);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(gain.rows() == 1 && gain.cols() == x.cols(), shapes("layer_norm gain", x, gain));
  require(bias.rows() == 1 && bias.cols() == x.cols(), shapes("layer_norm bias", x, bias));
  const Eigen::Index n = x.cols();
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.value().row(r).mean();
    const auto centered = (x.value().row(r).array() - mu).eval();
    inv_std(r) = 1.0 / std::sqrt(centered.square().mean() + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  Matrix v = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  v.rowwise() += bias.value().row(0);
  return record("layer_norm", std::move(v), {x, gain, bias},
                [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& nd) {
                  Node& in = nd.input(0);
                  Node& g = nd.input(1);
                  Node& b = nd.input(2);
                  if (g.requires_grad) g.accumulate(nd.grad.cwiseProduct(xhat).colwise().sum());
                  if (b.requires_grad) b.accumulate(nd.grad.colwise().sum());
                  if (!in.requires_grad) return;
                  const double cols = static_cast<double>(xhat.cols());
                  Matrix dxhat = (nd.grad.array().rowwise() * g.value.row(0).array()).matrix();
                  Matrix dx(xhat.rows(), xhat.cols());
                  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                    const double m1 = dxhat.row(r).sum() / cols;
                    const double m2 = dxhat.row(r).dot(xhat.row(r)) / cols;
                    dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
                  }
                  in.accumulate(dx);
                });
}

Tensor embed(const Tensor& table, std::span<const int> ids) {
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < table.rows(),
            "embed: id " + std::to_string(ids[i]) + " outside table " + table.shape_string());
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return record("embed", std::move(v), {table}, [idx = std::move(idx)](Node& n) {
    Node& t = n.input(0);
    Matrix g = Matrix::Zero(t.value.rows(), t.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    t.accumulate(g);
  });
}

Tensor gather(const Tensor& table, const IndexMatrix& index) {
  require(table.rows() == 1, "gather: table must be 1xR, got " + table.shape_string());
  Matrix v(index.rows(), index.cols());
  for (Eigen::Index r = 0; r < index.rows(); ++r) {
    for (Eigen::Index c = 0; c < index.cols(); ++c) {
      const int k = index(r, c);
      require(k >= 0 && k < table.cols(), "gather: index " + std::to_string(k) + " out of range");
      v(r, c) = table.value()(0, k);
    }
  }
  return record("gather", std::move(v), {table}, [index](Node& n) {
    Node& t = n.input(0);
    Matrix g = Matrix::Zero(1, t.value.cols());
    for (Eigen::Index r = 0; r < index.rows(); ++r)
      for (Eigen::Index c = 0; c < index.cols(); ++c) g(0, index(r, c)) += n.grad(r, c);
    t.accumulate(g);
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == parts[0].rows(), shapes("concat_cols", parts[0], p));
    cols += p.cols();
  }
  Matrix v(parts[0].rows(), cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return record("concat_cols", std::move(v), parts, [offsets = std::move(offsets)](Node& n) {
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      Node& in = n.input(i);
      if (in.requires_grad) in.accumulate(n.grad.middleCols(offsets[i], in.value.cols()));
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == parts[0].cols(), shapes("concat_rows", parts[0], p));
    rows += p.rows();
  }
  Matrix v(rows, parts[0].cols());
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return record("concat_rows", std::move(v), parts, [offsets = std::move(offsets)](Node& n) {
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      Node& in = n.input(i);
      if (in.requires_grad) in.accumulate(n.grad.middleRows(offsets[i], in.value.rows()));
    }
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(),
          "slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) + ") outside " +
              a.shape_string());
  return record("slice_cols", a.value().middleCols(start, count), {a}, [start, count](Node& n) {
    Node& in = n.input(0);
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    g.middleCols(start, count) = n.grad;
    in.accumulate(g);
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(),
          "slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) + ") outside " +
              a.shape_string());
  return record("slice_rows", a.value().middleRows(start, count), {a}, [start, count](Node& n) {
    Node& in = n.input(0);
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    g.middleRows(start, count) = n.grad;
    in.accumulate(g);
  });
}

Tensor sum(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return record("sum", std::move(v), {a}, [](Node& n) {
    Node& in = n.input(0);
    in.accumulate(Matrix::Constant(in.value.rows(), in.value.cols(), n.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  require(a.value().size() > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const double> weights) {
  require(static_cast<Eigen::Index>(targets.size()) == logits.rows() && weights.size() == targets.size(),
          "cross_entropy: targets/weights must have one entry per logits row " + logits.shape_string());
  const Eigen::VectorXd lse = dense::logsumexp_rows(logits.value());
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (weights[i] == 0.0) continue;
    require(targets[i] >= 0 && targets[i] < logits.cols(),
            "cross_entropy: target " + std::to_string(targets[i]) + " outside " + logits.shape_string());
    total += weights[i] * (lse(static_cast<Eigen::Index>(i)) - logits.value()(static_cast<Eigen::Index>(i), targets[i]));
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  std::vector<int> t(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return record("cross_entropy", std::move(v), {logits}, [t = std::move(t), w = std::move(w), lse](Node& n) {
    Node& in = n.input(0);
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    const double up = n.grad(0, 0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (w[i] == 0.0) continue;
      const auto r = static_cast<Eigen::Index>(i);
      g.row(r) = (in.value.row(r).array() - lse(r)).exp().matrix() * (w[i] * up);
      g(r, t[i]) -= w[i] * up;
    }
    in.accumulate(g);
  });
}

Tensor graph_aggregate(const Tensor& x, const Matrix& adjacency) {
  const Eigen::Index joints = adjacency.rows();
  require(adjacency.cols() == joints && joints > 0 && x.rows() % joints == 0,
          "graph_aggregate: " + std::to_string(joints) + "-joint adjacency does not tile " + x.shape_string());
  const Eigen::Index frames = x.rows() / joints;
  Matrix v(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < frames; ++t) {
    v.middleRows(t * joints, joints).noalias() = adjacency * x.value().middleRows(t * joints, joints);
  }
  return record("graph_aggregate", std::move(v), {x}, [adjacency, joints, frames](Node& n) {
    Node& in = n.input(0);
    Matrix g(in.value.rows(), in.value.cols());
    for (Eigen::Index t = 0; t < frames; ++t) {
      g.middleRows(t * joints, joints).noalias() = adjacency.transpose() * n.grad.middleRows(t * joints, joints);
    }
    in.accumulate(g);
  });
}

Tensor temporal_unfold(const Tensor& x, Eigen::Index joints, Eigen::Index kernel) {
  require(joints > 0 && x.rows() % joints == 0 && kernel % 2 == 1,
          "temporal_unfold: bad joints/kernel for " + x.shape_string());
  const Eigen::Index frames = x.rows() / joints;
  const Eigen::Index c = x.cols();
  const Eigen::Index half = kernel / 2;
  Matrix v = Matrix::Zero(x.rows(), kernel * c);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index k = 0; k < kernel; ++k) {
      const Eigen::Index src = t + k - half;
      if (src < 0 || src >= frames) continue;
      v.block(t * joints, k * c, joints, c) = x.value().middleRows(src * joints, joints);
    }
  }
  return record("temporal_unfold", std::move(v), {x}, [joints, frames, c, kernel, half](Node& n) {
    Node& in = n.input(0);
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    for (Eigen::Index t = 0; t < frames; ++t) {
      for (Eigen::Index k = 0; k < kernel; ++k) {
        const Eigen::Index src = t + k - half;
        if (src < 0 || src >= frames) continue;
        g.middleRows(src * joints, joints) += n.grad.block(t * joints, k * c, joints, c);
      }
    }
    in.accumulate(g);
  });
}

Tensor group_mean_rows(const Tensor& x, Eigen::Index group) {
  require(group > 0 && x.rows() % group == 0,
          "group_mean_rows: " + std::to_string(group) + " does not divide " + x.shape_string());
  const Eigen::Index m = x.rows() / group;
  Matrix v(m, x.cols());
  for (Eigen::Index i = 0; i < m; ++i) v.row(i) = x.value().middleRows(i * group, group).colwise().mean();
  return record("group_mean_rows", std::move(v), {x}, [group, m](Node& n) {
    Node& in = n.input(0);
    Matrix g(in.value.rows(), in.value.cols());
    for (Eigen::Index i = 0; i < m; ++i) {
      g.middleRows(i * group, group) = n.grad.row(i).replicate(group, 1) / static_cast<double>(group);
    }
    in.accumulate(g);
  });
}

}  // namespace stepscore::tensor
