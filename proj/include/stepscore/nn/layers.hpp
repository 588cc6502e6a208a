#pragma once

#include <span>
#include <string>
#include <vector>

#include "stepscore/tensor/attention.hpp"
#include "stepscore/tensor/params.hpp"

namespace stepscore::nn {

using tensor::BoolMatrix;
using tensor::IndexMatrix;
using tensor::Matrix;
using tensor::ParamStore;
using tensor::Rng;
using tensor::Tensor;

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, bool bias = true);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // in × out
  Tensor bias;    // 1 × out, undefined when built without bias
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int width);
  Tensor operator()(const Tensor& x) const;

  Tensor gain;
  Tensor shift;
};

/// Two linear maps with a ReLU between.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, int width, int hidden, Rng& rng);
  Tensor operator()(const Tensor& x) const;

  Linear in;
  Linear out;
};

/// Multi-head scaled dot-product attention. Head h uses columns
/// [h·d_head, (h+1)·d_head) of the query/key/value projections, which is the
/// same as giving every head its own W^q, W^k, W^v of width d_head.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, int width, int heads, Rng& rng);

  /// `head_bias`, when non-empty, holds one n×m additive score bias per head.
  Tensor operator()(const Tensor& queries, const Tensor& keys_values, const BoolMatrix* allowed = nullptr,
                    std::span<const Tensor> head_bias = {}) const;

  /// Attention weights per head, computed from current values (no graph).
  std::vector<Matrix> weights(const Matrix& queries, const Matrix& keys_values,
                              const BoolMatrix* allowed = nullptr) const;

  int heads = 1;
  int d_head = 1;
  Linear wq, wk, wv, wo;
};

/// Learned per-head bias over clipped signed distances between group indices.
class RelativeBias {
 public:
  RelativeBias() = default;
  RelativeBias(ParamStore& store, const std::string& name, int heads, int clip);

  /// distance(i, j) = clamp(groups_q[i] − groups_k[j], −clip, clip)
  std::vector<Tensor> operator()(std::span<const int> groups_q, std::span<const int> groups_k) const;

  int clip = 0;
  std::vector<Tensor> tables;  // one 1×(2·clip+1) row per head
};

/// Pre-norm transformer layer: x + MHA(LN x), then x + FF(LN x).
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParamStore& store, const std::string& name, int width, int heads, int hidden, Rng& rng);
  Tensor operator()(const Tensor& x, const BoolMatrix* allowed = nullptr,
                    std::span<const Tensor> head_bias = {}) const;

  LayerNorm norm_attn;
  MultiHeadAttention attn;
  LayerNorm norm_ff;
  FeedForward ff;
};

/// Single-layer GRU over the rows of a T×in sequence; returns all T hidden states.
class Gru {
 public:
  Gru() = default;
  Gru(ParamStore& store, const std::string& name, int in, int hidden, Rng& rng);
  Tensor operator()(const Tensor& sequence) const;

  int hidden = 0;
  Linear input;      // in → 3·hidden, gates ordered r, z, n
  Linear recurrent;  // hidden → 3·hidden
};

/// Fixed sinusoidal features for arbitrary (possibly fractional) positions.
Matrix sinusoidal_encoding(std::span<const double> positions, int width, double base = 10000.0);

}  // namespace stepscore::nn
