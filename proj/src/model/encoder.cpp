// SPDX-License-Identifier: Apache-2.0
#include "kdepth/model/encoder.hpp"

namespace kdepth::model {

void check_image_batch(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("encoder: expected [N x 3 x H x W], got " + to_string(x.shape()));
  if (x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0 || x.dim(2) == 0 || x.dim(3) == 0) {
    throw ShapeError("encoder: H and W must be positive multiples of 32, got " + to_string(x.shape()));
  }
}

CnnEncoder::CnnEncoder(const Widths& w, Rng& rng) : stem(3, w[0], 3, 2, rng) {
  std::int64_t prev = w[0];
  for (std::size_t l = 0; l < 4; ++l) {
    stages[l][0] = nn::ConvBnRelu(prev, w[l], 3, 2, rng);
    stages[l][1] = nn::ConvBnRelu(w[l], w[l], 3, 1, rng);
    prev = w[l];
  }
}

Widths CnnEncoder::widths() const {
  Widths w{};
  for (std::size_t l = 0; l < 4; ++l) w[l] = stages[l][1].local().out_channels();
  return w;
}

Pyramid CnnEncoder::forward(const Tensor& x, bool train) const {
  check_image_batch(x);
  Pyramid p;
  Tensor h = stem.forward(x, train);
  for (std::size_t l = 0; l < 4; ++l) {
    h = stages[l][1].forward(stages[l][0].forward(h, train), train);
    p[l] = h;
  }
  return p;
}

void CnnEncoder::for_each_conv_block(const std::function<void(nn::ConvBnRelu&)>& f) {
  f(stem);
  for (auto& s : stages) {
    for (auto& b : s) f(b);
  }
}

void CnnEncoder::visit(const std::string& prefix, const nn::ParamVisitor& v) {
  stem.visit(nn::join(prefix, "stem"), v);
  for (std::size_t l = 0; l < 4; ++l) {
    const std::string stage = nn::join(prefix, "stage" + std::to_string(l + 1));
    stages[l][0].visit(stage + ".conv1", v);
    stages[l][1].visit(stage + ".conv2", v);
  }
}

TransformerEncoder::TransformerEncoder(const Widths& w, int blocks_per_stage, int heads, Rng& rng) {
  embed[0] = nn::ConvBnRelu(3, w[0] / 2, 3, 2, rng);
  embed[1] = nn::ConvBnRelu(w[0] / 2, w[0], 3, 2, rng);
  for (std::size_t l = 0; l < 4; ++l) {
    if (l > 0) merge[l - 1] = nn::ConvBnRelu(w[l - 1], w[l], 3, 2, rng);
    for (int b = 0; b < blocks_per_stage; ++b) blocks[l].emplace_back(w[l], heads, 2, rng);
  }
}

Widths TransformerEncoder::widths() const {
  Widths w{};
  w[0] = embed[1].local().out_channels();
  for (std::size_t l = 1; l < 4; ++l) w[l] = merge[l - 1].local().out_channels();
  return w;
}

Pyramid TransformerEncoder::forward(const Tensor& x, bool train) const {
  check_image_batch(x);
  Pyramid p;
  Tensor h = embed[1].forward(embed[0].forward(x, train), train);
  for (std::size_t l = 0; l < 4; ++l) {
    if (l > 0) h = merge[l - 1].forward(h, train);
    for (const auto& block : blocks[l]) h = block.forward_map(h);
    p[l] = h;
  }
  return p;
}

void TransformerEncoder::for_each_conv_block(const std::function<void(nn::ConvBnRelu&)>& f) {
  for (auto& b : embed) f(b);
  for (auto& b : merge) f(b);
}

void TransformerEncoder::visit(const std::string& prefix, const nn::ParamVisitor& v) {
  embed[0].visit(nn::join(prefix, "embed1"), v);
  embed[1].visit(nn::join(prefix, "embed2"), v);
  for (std::size_t l = 0; l < 4; ++l) {
    const std::string stage = nn::join(prefix, "stage" + std::to_string(l + 1));
    if (l > 0) merge[l - 1].visit(stage + ".merge", v);
    for (std::size_t b = 0; b < blocks[l].size(); ++b) blocks[l][b].visit(stage + ".block" + std::to_string(b + 1), v);
  }
}

}  // namespace kdepth::model
