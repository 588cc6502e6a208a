#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "stepscore/tensor/tensor.hpp"

namespace stepscore::tensor {

using Rng = std::mt19937_64;

/// Named parameters in registration order, each with Adam moment buffers.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor param;
    Matrix first_moment;
    Matrix second_moment;
  };

  /// Registers a trainable tensor; names must be unique.
  Tensor add(const std::string& name, Matrix init);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor get(const std::string& name) const;
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  void zero_grad();
  /// Parameters whose name starts with `prefix` are skipped by the optimizer.
  void freeze(const std::string& prefix) { frozen_.push_back(prefix); }
  bool is_frozen(const std::string& name) const;

  std::uint64_t step = 0;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> frozen_;
};

/// Names of parameters the loss did not reach; their gradients are set to zero.
struct BackwardReport {
  std::vector<std::string> unreached;
};

/// Runs backward from `loss` and fills in a zero gradient for every
/// parameter that is not connected to it.
BackwardReport backward(const Tensor& loss, ParamStore& params);

// Initializers. All draw from the caller's generator, so a seed fixes them.
Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
Matrix uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng);

}  // namespace stepscore::tensor
