// SPDX-License-Identifier: Apache-2.0
#include "kdepth/nn/conv_block.hpp"

namespace kdepth::nn {

ConvBnRelu::ConvBnRelu(std::int64_t cin, std::int64_t cout, int k, int stride, Rng& rng, bool relu_)
    : conv(Conv2d(cin, cout, k, stride, false, rng)), bn(cout), relu(relu_) {}

const Conv2d& ConvBnRelu::local() const {
  if (const auto* lg = std::get_if<LgConv>(&conv)) return lg->local;
  return std::get<Conv2d>(conv);
}

bool ConvBnRelu::wrap_lgconv(const LgConvOptions& options, Rng& rng) {
  auto* plain = std::get_if<Conv2d>(&conv);
  if (plain == nullptr || plain->kernel() != 3) return false;
  LgConv lg(*plain, options, rng);
  conv = std::move(lg);
  return true;
}

Tensor ConvBnRelu::forward(const Tensor& x, bool train) const {
  Tensor y = std::visit(
      [&](const auto& c) {
        if constexpr (std::is_same_v<std::decay_t<decltype(c)>, LgConv>) {
          return c.forward(x, train);
        } else {
          return c.forward(x);
        }
      },
      conv);
  y = bn.forward(y, train);
  return relu ? kdepth::relu(y) : y;
}

void ConvBnRelu::visit(const std::string& prefix, const ParamVisitor& v) {
  if (auto* lg = std::get_if<LgConv>(&conv)) {
    lg->visit(prefix, v);
  } else {
    std::get<Conv2d>(conv).visit(join(prefix, "local"), v);
  }
  bn.visit(join(prefix, "bn"), v);
}

}  // namespace kdepth::nn
