#include "stepscore/tensor/params.hpp"

#include <cmath>

namespace stepscore::tensor {

Tensor ParamStore::add(const std::string& name, Matrix init) {
  if (contains(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  const auto rows = init.rows();
  const auto cols = init.cols();
  entries_.push_back({name, Tensor::parameter(std::move(init)), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return entries_.back().param;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return entries_[it->second].param;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.param.value().size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.param.zero_grad();
}

bool ParamStore::is_frozen(const std::string& name) const {
  for (const auto& p : frozen_)
    if (name.rfind(p, 0) == 0) return true;
  return false;
}

BackwardReport backward(const Tensor& loss, ParamStore& params) {
  tensor::backward(loss);
  BackwardReport report;
  for (auto& e : params.entries()) {
    if (e.param.grad().size() == 0) {
      report.unreached.push_back(e.name);
      e.param.mutable_grad() = Matrix::Zero(e.param.rows(), e.param.cols());
    }
  }
  return report;
}

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return uniform(rows, cols, -limit, limit, rng);
}

Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace stepscore::tensor
