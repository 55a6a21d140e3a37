// SPDX-License-Identifier: Apache-2.0
//
// Four-stage encoders. Both variants emit features at strides 4, 8, 16 and 32
// of the input, which must therefore have H and W divisible by 32.

#pragma once

#include <array>
#include <functional>
#include <variant>

#include "kdepth/nn/conv_block.hpp"
#include "kdepth/nn/transformer.hpp"

namespace kdepth::model {

using Widths = std::array<std::int64_t, 4>;

/// F_1..F_4, each [N x C_l x H/2^(l+1) x W/2^(l+1)].
using Pyramid = std::array<Tensor, 4>;

/// Throws ShapeError unless x is [N x 3 x H x W] with H, W divisible by 32.
void check_image_batch(const Tensor& x);

/// Plain CNN: a stride-2 stem, then per stage a stride-2 conv and a stride-1 conv.
struct CnnEncoder {
  nn::ConvBnRelu stem;
  std::array<std::array<nn::ConvBnRelu, 2>, 4> stages;

  CnnEncoder() = default;
  CnnEncoder(const Widths& widths, Rng& rng);

  Widths widths() const;
  Pyramid forward(const Tensor& x, bool train) const;
  void for_each_conv_block(const std::function<void(nn::ConvBnRelu&)>& f);
  void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

/// Conv patch embedding (stride 4) followed by transformer stages; stages
/// 2..4 start with a stride-2 conv that merges patches and widens channels.
struct TransformerEncoder {
  std::array<nn::ConvBnRelu, 2> embed;
  std::array<nn::ConvBnRelu, 3> merge;
  std::array<std::vector<nn::TransformerBlock>, 4> blocks;

  TransformerEncoder() = default;
  TransformerEncoder(const Widths& widths, int blocks_per_stage, int heads, Rng& rng);

  Widths widths() const;
  Pyramid forward(const Tensor& x, bool train) const;
  void for_each_conv_block(const std::function<void(nn::ConvBnRelu&)>& f);
  void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

using Encoder = std::variant<CnnEncoder, TransformerEncoder>;

}  // namespace kdepth::model
