// SPDX-License-Identifier: Apache-2.0
//
// Local-global convolution: an existing 3x3 conv (the local branch) plus a
// global branch that attends over all pixels and broadcasts a gated global
// vector back to every position:
//
//   t      = relu(conv1x1(x))                      hidden width Cout, stride of the local conv
//   hidden = concat(t, replicate(avgpool(t)))      2*Cout channels
//   a_j    = softmax over pixels of conv1x1(t)_j               j = 1..g heads
//   v      = proj(concat_j sum_p a_j[p] * hidden_j[:, p])      head j: slice j of both halves
//   gate   = sigmoid(conv1x1(hidden))              one probability per pixel
//   out    = local(x) + BN(gate * replicate(v))    BN gamma starts at gamma0
//
// With gamma = 0 the block reproduces the local conv exactly.

#pragma once

#include "kdepth/nn/layers.hpp"

namespace kdepth::nn {

struct LgConvOptions {
  int heads = 4;
  double gamma0 = 1e-3;
};

/// Intermediate values exposed for tests.
struct LgConvTrace {
  Tensor local;      // [N x Cout x H' x W']
  Tensor attention;  // [N x g x H'W'], each row sums to 1
  Tensor gate;       // [N x 1 x H' x W'], values in (0, 1)
};

struct LgConv {
  Conv2d local;
  Conv2d transform;
  Conv2d attn;
  Linear proj;
  Conv2d gate;
  BatchNorm2d bn;
  int heads = 4;

  LgConv() = default;
  /// Takes over `local` verbatim and initializes a fresh global branch.
  LgConv(Conv2d local, const LgConvOptions& options, Rng& rng);

  /// x: [N x Cin x H x W] or [Cin x H x W].
  Tensor forward(const Tensor& x, bool train, LgConvTrace* trace = nullptr) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

}  // namespace kdepth::nn
