#include "stepscore/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "stepscore/tensor/dense.hpp"

namespace stepscore::nn {

using namespace stepscore::tensor;

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, bool with_bias)
    : weight(store.add(name + ".w", xavier_uniform(in, out, rng))) {
  if (with_bias) bias = store.add(name + ".b", Matrix::Zero(1, out));
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int width)
    : gain(store.add(name + ".gain", Matrix::Ones(1, width))),
      shift(store.add(name + ".bias", Matrix::Zero(1, width))) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain, shift); }

FeedForward::FeedForward(ParamStore& store, const std::string& name, int width, int hidden, Rng& rng)
    : in(store, name + ".in", width, hidden, rng), out(store, name + ".out", hidden, width, rng) {}

Tensor FeedForward::operator()(const Tensor& x) const { return out(relu(in(x))); }

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, int width, int heads_,
                                       Rng& rng)
    : heads(heads_), d_head(width / heads_) {
  if (width % heads_ != 0) {
    throw ShapeError("MultiHeadAttention: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads_) + " heads");
  }
  wq = Linear(store, name + ".q", width, width, rng, false);
  wk = Linear(store, name + ".k", width, width, rng, false);
  wv = Linear(store, name + ".v", width, width, rng, false);
  wo = Linear(store, name + ".o", width, width, rng);
}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys_values,
                                      const BoolMatrix* allowed, std::span<const Tensor> head_bias) const {
  const Tensor q = wq(queries);
  const Tensor k = wk(keys_values);
  const Tensor v = wv(keys_values);
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Tensor* bias = head_bias.empty() ? nullptr : &head_bias[static_cast<std::size_t>(h)];
    outs.push_back(attention(slice_cols(q, h * d_head, d_head), slice_cols(k, h * d_head, d_head),
                             slice_cols(v, h * d_head, d_head), allowed, bias));
  }
  return wo(heads == 1 ? outs.front() : concat_cols(outs));
}

std::vector<Matrix> MultiHeadAttention::weights(const Matrix& queries, const Matrix& keys_values,
                                                const BoolMatrix* allowed) const {
  const Matrix q = queries * wq.weight.value();
  const Matrix k = keys_values * wk.weight.value();
  std::vector<Matrix> out;
  const double s = 1.0 / std::sqrt(static_cast<double>(d_head));
  for (int h = 0; h < heads; ++h) {
    const Matrix scores = q.middleCols(h * d_head, d_head) * k.middleCols(h * d_head, d_head).transpose() * s;
    out.push_back(allowed ? Matrix(dense::masked_softmax_rows(scores, *allowed))
                          : Matrix(dense::softmax_rows(scores)));
  }
  return out;
}

RelativeBias::RelativeBias(ParamStore& store, const std::string& name, int heads, int clip_)
    : clip(clip_) {
  for (int h = 0; h < heads; ++h) {
    tables.push_back(store.add(name + ".h" + std::to_string(h), Matrix::Zero(1, 2 * clip_ + 1)));
  }
}

std::vector<Tensor> RelativeBias::operator()(std::span<const int> groups_q, std::span<const int> groups_k) const {
  IndexMatrix index(static_cast<Eigen::Index>(groups_q.size()), static_cast<Eigen::Index>(groups_k.size()));
  for (std::size_t i = 0; i < groups_q.size(); ++i) {
    for (std::size_t j = 0; j < groups_k.size(); ++j) {
      index(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::clamp(groups_q[i] - groups_k[j], -clip, clip) + clip;
    }
  }
  std::vector<Tensor> out;
  out.reserve(tables.size());
  for (const auto& t : tables) out.push_back(gather(t, index));
  return out;
}

EncoderLayer::EncoderLayer(ParamStore& store, const std::string& name, int width, int heads, int hidden, Rng& rng)
    : norm_attn(store, name + ".ln1", width),
      attn(store, name + ".attn", width, heads, rng),
      norm_ff(store, name + ".ln2", width),
      ff(store, name + ".ff", width, hidden, rng) {}

Tensor EncoderLayer::operator()(const Tensor& x, const BoolMatrix* allowed, std::span<const Tensor> head_bias) const {
  const Tensor normed = norm_attn(x);
  const Tensor h = add(x, attn(normed, normed, allowed, head_bias));
  return add(h, ff(norm_ff(h)));
}

Gru::Gru(ParamStore& store, const std::string& name, int in, int hidden_, Rng& rng)
    : hidden(hidden_),
      input(store, name + ".ih", in, 3 * hidden_, rng),
      recurrent(store, name + ".hh", hidden_, 3 * hidden_, rng) {}

Tensor Gru::operator()(const Tensor& sequence) const {
  const Tensor projected = input(sequence);
  Tensor h = Tensor::constant(Matrix::Zero(1, hidden));
  std::vector<Tensor> states;
  states.reserve(static_cast<std::size_t>(sequence.rows()));
  for (Eigen::Index t = 0; t < sequence.rows(); ++t) {
    const Tensor xt = slice_rows(projected, t, 1);
    const Tensor ht = recurrent(h);
    const Tensor r = sigmoid(add(slice_cols(xt, 0, hidden), slice_cols(ht, 0, hidden)));
    const Tensor z = sigmoid(add(slice_cols(xt, hidden, hidden), slice_cols(ht, hidden, hidden)));
    const Tensor n = tanh(add(slice_cols(xt, 2 * hidden, hidden), mul(r, slice_cols(ht, 2 * hidden, hidden))));
    // h' = (1 − z) ⊙ n + z ⊙ h
    h = add(mul(affine(z, -1.0, 1.0), n), mul(z, h));
    states.push_back(h);
  }
  return concat_rows(states);
}

Matrix sinusoidal_encoding(std::span<const double> positions, int width, double base) {
  Matrix out(static_cast<Eigen::Index>(positions.size()), width);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (int c = 0; c < width; ++c) {
      const double freq = std::pow(base, -static_cast<double>(2 * (c / 2)) / width);
      const double angle = positions[i] * freq;
      out(static_cast<Eigen::Index>(i), c) = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return out;
}

}  // namespace stepscore::nn
