#include "stepscore/pipeline/gradcheck_suite.hpp"

#include <functional>
#include <map>
#include <memory>

#include "stepscore/bert/bertgen.hpp"
#include "stepscore/drum/decoder.hpp"
#include "stepscore/motion/encoder.hpp"
#include "stepscore/tensor/attention.hpp"
#include "stepscore/tensor/gradcheck.hpp"
#include "stepscore/tensor/ops.hpp"

namespace stepscore::pipeline {

namespace {

using tensor::Matrix;
using tensor::ParamStore;
using tensor::Rng;
using tensor::Tensor;

// Near-zero gradients are compared absolutely below this size.
constexpr double kFloor = 1e-5;

Tensor leaf(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  return Tensor::parameter(tensor::normal(rows, cols, 1.0, rng));
}

// Contracts an output with a fixed random matrix so every entry matters.
std::function<Tensor(const Tensor&)> prober(Rng& rng) {
  auto cache = std::make_shared<std::map<std::pair<Eigen::Index, Eigen::Index>, Tensor>>();
  auto local = std::make_shared<Rng>(rng());
  return [cache, local](const Tensor& y) {
    auto& w = (*cache)[{y.rows(), y.cols()}];
    if (!w.defined()) w = Tensor::constant(tensor::normal(y.rows(), y.cols(), 1.0, *local));
    return tensor::sum(tensor::mul(y, w));
  };
}

std::vector<Tensor> with_store(std::vector<Tensor> leaves, ParamStore& store) {
  for (auto& e : store.entries()) leaves.push_back(e.param);
  return leaves;
}

void randomize_relative(ParamStore& store, Rng& rng) {
  for (auto& e : store.entries())
    if (e.name.find(".rel") != std::string::npos)
      e.param.mutable_value() = tensor::normal(e.param.rows(), e.param.cols(), 0.3, rng);
}

SuiteResult run(const std::string& name, const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                double tolerance) {
  const auto r = tensor::check_gradients(loss, leaves, 1e-5, 48, kFloor);
  return {name, r.max_rel_error, r.worst, r.checked, r.passed(tolerance)};
}

codec::Vocab toy_vocab(std::vector<codec::TokenQuad>& drums, std::vector<codec::TokenQuad>& full) {
  codec::QuantizedClip clip;
  clip.measures.resize(2);
  clip.measures[0].events.push_back({0, std::nullopt, {{36, 0, codec::kDrumInstrument, 1}, {38, 0, codec::kDrumInstrument, 1}}});
  clip.measures[0].events.push_back({16, std::nullopt, {{36, 0, codec::kDrumInstrument, 1}}});
  clip.measures[1].events.push_back({8, std::nullopt, {{38, 0, codec::kDrumInstrument, 1}}});
  drums = codec::encode(clip);
  clip.measures[0].events[1].notes.push_back({48, 1, 32, 4});
  clip.measures[1].events.push_back({9, std::nullopt, {{50, 1, 32, 4}}});
  full = codec::encode(clip);
  const std::vector<std::vector<codec::TokenQuad>> corpus{drums, full};
  return codec::Vocab::build(corpus);
}

}  // namespace

std::vector<SuiteResult> run_gradcheck_suites(double tolerance) {
  std::vector<SuiteResult> out;
  Rng rng(20240);
  auto probe = prober(rng);

  {
    ParamStore store;
    const auto g = motion::MotionGraph::from_edges(3, {{0, 1}, {1, 2}});
    const motion::StBlock block(store, "st", 3, 4, 3, rng);
    const Tensor x = leaf(9, 3, rng);
    out.push_back(run("graph convolution block", [&] { return probe(block(x, g)); }, with_store({x}, store), tolerance));
  }
  {
    ParamStore store;
    const nn::Gru gru(store, "gru", 3, 4, rng);
    const Tensor x = leaf(5, 3, rng);
    out.push_back(run("gated recurrent unit", [&] { return probe(gru(x)); }, with_store({x}, store), tolerance));
  }
  {
    ParamStore store;
    const nn::MultiHeadAttention msa(store, "msa", 6, 2, rng);
    const nn::RelativeBias rel(store, "msa.rel", 2, 2);
    randomize_relative(store, rng);
    const Tensor x = leaf(5, 6, rng);
    const auto mask = tensor::causal_mask(5);
    const std::vector<int> groups{0, 1, 1, 2, 4};
    out.push_back(run("masked self-attention",
                      [&] { return probe(msa(x, x, &mask, rel(groups, groups))); }, with_store({x}, store), tolerance));
  }
  {
    ParamStore store;
    const nn::MultiHeadAttention vgm(store, "vgm", 6, 2, rng);
    const Tensor d = leaf(4, 6, rng);
    const Tensor z = leaf(7, 6, rng);
    out.push_back(run("VGM cross-attention", [&] { return probe(vgm(d, z)); }, with_store({d, z}, store), tolerance));
  }
  {
    ParamStore store;
    const nn::FeedForward ff(store, "ff", 5, 7, rng);
    const Tensor x = leaf(4, 5, rng);
    out.push_back(run("feed-forward", [&] { return probe(ff(x)); }, with_store({x}, store), tolerance));
  }
  {
    ParamStore store;
    const nn::LayerNorm norm(store, "ln", 5);
    store.entries()[0].param.mutable_value() = tensor::normal(1, 5, 1.0, rng);
    store.entries()[1].param.mutable_value() = tensor::normal(1, 5, 1.0, rng);
    const Tensor x = leaf(4, 5, rng);
    out.push_back(run("layer norm", [&] { return probe(norm(x)); }, with_store({x}, store), tolerance));
  }
  {
    const Tensor logits = leaf(6, 2, rng);
    const std::vector<int> beats{1, 0, 0, 1, 0, 0};
    out.push_back(run("beat loss head", [&] { return motion::beat_loss(logits, beats, 1.5); }, {logits}, tolerance));
  }

  std::vector<codec::TokenQuad> drums;
  std::vector<codec::TokenQuad> full;
  const codec::Vocab vocab = toy_vocab(drums, full);
  {
    const auto seq = codec::to_ids(drums, vocab, true);
    drum::FieldLogits logits;
    std::vector<Tensor> leaves;
    const auto sizes = drum::field_sizes(vocab);
    for (std::size_t f = 0; f < drum::kFields; ++f) {
      logits[f] = leaf(static_cast<Eigen::Index>(seq.size()), sizes[f], rng);
      leaves.push_back(logits[f]);
    }
    const auto w = drum::field_weights(sizes);
    out.push_back(run("next-token loss head", [&] { return drum::next_token_loss(logits, seq, w); }, leaves, tolerance));
    Rng mask_rng(3);
    auto batch = bert::measure_mask(codec::to_ids(full, vocab), vocab, mask_rng, 0.5);
    for (auto& m : batch.masked) m.assign(batch.input.size(), true);
    drum::FieldLogits blog;
    std::vector<Tensor> bleaves;
    for (std::size_t f = 0; f < drum::kFields; ++f) {
      blog[f] = leaf(static_cast<Eigen::Index>(batch.input.size()), sizes[f], rng);
      bleaves.push_back(blog[f]);
    }
    out.push_back(run("masked-token loss head", [&] { return bert::weighted_loss(blog, batch, w); }, bleaves, tolerance));
  }
  {
    ParamStore store;
    motion::ContextConfig config;
    config.stgcn = {{3, 4}, 6, 3};
    config.beat = {1, 2, 8};
    config.style = {1, 3, 3, 4, 32, 5, 2};
    config.d_model = 6;
    const motion::ContextEncoder encoder(store, "motion", config, rng);
    const auto g = motion::MotionGraph::from_edges(3, {{0, 1}, {1, 2}});
    const Matrix x = tensor::normal(6, 3, 1.0, rng);
    const std::vector<int> beats{1, 0};
    out.push_back(run(
        "context encoder",
        [&] {
          const auto o = encoder(x, g, 0, &beats);
          return tensor::add(probe(o.z), tensor::add(motion::beat_loss(o.beat_logits, beats, 1.5), probe(o.style.logits)));
        },
        with_store({}, store), tolerance));
  }
  {
    ParamStore store;
    drum::DrumConfig config;
    config.d_model = 4;
    config.heads = 2;
    config.blocks = 1;
    config.encoder_blocks = 1;
    config.hidden = 6;
    config.max_length = 32;
    config.relative_clip = 4;
    const drum::DrumDecoder decoder(store, "drum", vocab, config, rng);
    randomize_relative(store, rng);
    const Tensor z = leaf(5, 4, rng);
    const auto seq = codec::to_ids(drums, vocab, true);
    const auto w = drum::field_weights(decoder.sizes);
    out.push_back(run("drum decoder", [&] { return drum::next_token_loss(decoder(seq, z), seq, w); },
                      with_store({z}, store), tolerance));
  }
  {
    ParamStore store;
    const bert::BertGen model(store, "bert", vocab, {4, 2, 2, 6, 64, 4}, rng);
    randomize_relative(store, rng);
    Rng mask_rng(5);
    auto batch = bert::measure_mask(codec::to_ids(full, vocab), vocab, mask_rng, 0.5);
    for (auto& m : batch.masked) m.assign(batch.input.size(), true);
    const auto w = drum::field_weights(model.sizes);
    out.push_back(run("BERT model", [&] { return bert::weighted_loss(model(batch.input), batch, w); },
                      with_store({}, store), tolerance));
  }
  return out;
}

}  // namespace stepscore::pipeline
