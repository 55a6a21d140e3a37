// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <variant>

#include "kdepth/nn/lgconv.hpp"

namespace kdepth::nn {

/// conv -> batch norm -> optional ReLU. The conv is either a plain Conv2d or,
/// after wrapping, an LgConv around the same weights. Both report the conv
/// weights as "<prefix>.local.*", so checkpoints of an unwrapped backbone map
/// onto the wrapped one.
struct ConvBnRelu {
  std::variant<Conv2d, LgConv> conv;
  BatchNorm2d bn;
  bool relu = true;

  ConvBnRelu() = default;
  ConvBnRelu(std::int64_t cin, std::int64_t cout, int k, int stride, Rng& rng, bool relu = true);

  bool is_lgconv() const { return std::holds_alternative<LgConv>(conv); }
  const Conv2d& local() const;
  LgConv* lgconv() { return std::get_if<LgConv>(&conv); }

  /// Replaces a 3x3 conv by an LgConv that reuses its weights. Returns false
  /// (and changes nothing) for other kernel sizes or an already wrapped block.
  bool wrap_lgconv(const LgConvOptions& options, Rng& rng);

  Tensor forward(const Tensor& x, bool train) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

/// Wraps every 3x3 ConvBnRelu reported by `backbone.for_each_conv_block`.
/// Returns the number of blocks wrapped.
template <class Backbone>
int wrap_backbone_with_lgconv(Backbone& backbone, const LgConvOptions& options, Rng& rng) {
  int wrapped = 0;
  backbone.for_each_conv_block([&](ConvBnRelu& block) {
    if (block.wrap_lgconv(options, rng)) ++wrapped;
  });
  return wrapped;
}

}  // namespace kdepth::nn
