// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kdepth/nn/layers.hpp"

namespace kdepth::nn {

/// Pre-norm transformer block over token sequences:
///   x = x + out(MHSA(LN1(x)));  x = x + fc2(gelu(fc1(LN2(x))))
/// No positional embedding is added.
struct TransformerBlock {
  LayerNorm norm1, norm2;
  Linear q, k, v;  // k has no bias: it would shift every score of a row equally
  Linear out, fc1, fc2;
  int heads = 4;

  TransformerBlock() = default;
  TransformerBlock(std::int64_t dim, int heads, int mlp_ratio, Rng& rng);

  std::int64_t dim() const { return norm1.gamma.dim(0); }
  /// Zeroes `out` and `fc2`, which turns the block into the identity map.
  void zero_output_projections();

  /// tokens: [N x T x D] or [T x D]. When `attention` is given it receives
  /// the [N*heads x T x T] attention matrices.
  Tensor forward(const Tensor& tokens, Tensor* attention = nullptr) const;
  /// Applies the block to the H*W pixel tokens of an [N x D x H x W] map.
  Tensor forward_map(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

}  // namespace kdepth::nn
