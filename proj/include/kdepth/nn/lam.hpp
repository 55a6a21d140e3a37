// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kdepth/nn/layers.hpp"

namespace kdepth::nn {

struct LamOutput {
  Tensor weighted;  // [N x C x H x W] = f * A
  Tensor scores;    // A, [N x 1 x H x W], non-negative with mean 1 per image
};

/// Loss attention module. The query is projected from the channel vector of
/// spatial means, keys from each pixel; A = H*W * softmax_pixels(q.k / sqrt(C)).
/// The query projection starts at zero, so A starts uniform (all ones).
struct Lam {
  Linear query;
  Linear key;

  Lam() = default;
  Lam(std::int64_t channels, Rng& rng);

  LamOutput forward(const Tensor& f) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

}  // namespace kdepth::nn
