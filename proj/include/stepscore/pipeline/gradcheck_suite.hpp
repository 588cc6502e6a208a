#pragma once

#include <string>
#include <vector>

namespace stepscore::pipeline {

struct SuiteResult {
  std::string name;
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
  bool passed = false;
};

/// Central finite differences against backprop for every network layer on
/// miniature shapes: graph convolution, GRU, masked self-attention with
/// relative bias, VGM cross-attention, feed-forward, layer norm, the loss
/// heads, and the assembled context encoder, drum decoder and BERT model.
std::vector<SuiteResult> run_gradcheck_suites(double tolerance = 1e-5);

}  // namespace stepscore::pipeline
