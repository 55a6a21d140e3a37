// SPDX-License-Identifier: Apache-2.0
#include "kdepth/nn/transformer.hpp"

#include <cmath>

namespace kdepth::nn {

TransformerBlock::TransformerBlock(std::int64_t dim, int heads_, int mlp_ratio, Rng& rng)
    : norm1(dim), norm2(dim), heads(heads_) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("TransformerBlock: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  q = Linear(dim, dim, true, rng);
  k = Linear(dim, dim, false, rng);
  v = Linear(dim, dim, true, rng);
  out = Linear(dim, dim, true, rng);
  fc1 = Linear(dim, dim * mlp_ratio, true, rng, true);
  fc2 = Linear(dim * mlp_ratio, dim, true, rng);
}

void TransformerBlock::zero_output_projections() {
  for (Tensor* t : {&out.w, &out.b, &fc2.w, &fc2.b}) t->copy_data_from(Tensor::zeros(t->shape(), t->dtype()));
}

Tensor TransformerBlock::forward(const Tensor& tokens, Tensor* attention) const {
  const bool single = tokens.rank() == 2;
  const Tensor x = single ? reshape(tokens, {1, tokens.dim(0), tokens.dim(1)}) : tokens;
  if (x.rank() != 3 || x.dim(2) != dim()) {
    throw ShapeError("TransformerBlock: expected tokens [N x T x " + std::to_string(dim()) + "], got " +
                     to_string(tokens.shape()));
  }
  const std::int64_t n = x.dim(0), t = x.dim(1), d = dim(), dh = d / heads;

  // [N x T x D] -> [N*h x T x dh]
  const Tensor xn = norm1.forward(x);
  auto heads_of = [&](const Linear& p) {
    return reshape(permute(reshape(p.forward(xn), {n, t, heads, dh}), {0, 2, 1, 3}), {n * heads, t, dh});
  };
  const Tensor qh = heads_of(q);
  const Tensor kt = permute(heads_of(k), {0, 2, 1});
  const Tensor vh = heads_of(v);

  const Tensor scores = mul_scalar(matmul(qh, kt), 1.0 / std::sqrt(static_cast<double>(dh)));
  const Tensor att = softmax(scores, 2);
  if (attention != nullptr) *attention = att;
  const Tensor ctx = reshape(permute(reshape(matmul(att, vh), {n, heads, t, dh}), {0, 2, 1, 3}), {n, t, d});
  const Tensor h = add(x, out.forward(ctx));
  const Tensor y = add(h, fc2.forward(gelu(fc1.forward(norm2.forward(h)))));
  return single ? reshape(y, {t, d}) : y;
}

Tensor TransformerBlock::forward_map(const Tensor& x) const {
  if (x.rank() != 4) throw ShapeError("TransformerBlock: expected [N x D x H x W], got " + to_string(x.shape()));
  const std::int64_t n = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Tensor tokens = permute(reshape(x, {n, d, h * w}), {0, 2, 1});
  const Tensor y = forward(tokens);
  return reshape(permute(y, {0, 2, 1}), {n, d, h, w});
}

void TransformerBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
  norm1.visit(join(prefix, "norm1"), fn);
  q.visit(join(prefix, "q"), fn);
  k.visit(join(prefix, "k"), fn);
  v.visit(join(prefix, "v"), fn);
  out.visit(join(prefix, "out"), fn);
  norm2.visit(join(prefix, "norm2"), fn);
  fc1.visit(join(prefix, "fc1"), fn);
  fc2.visit(join(prefix, "fc2"), fn);
}

}  // namespace kdepth::nn
