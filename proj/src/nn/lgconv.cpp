// SPDX-License-Identifier: Apache-2.0
#include "kdepth/nn/lgconv.hpp"

namespace kdepth::nn {

LgConv::LgConv(Conv2d local_, const LgConvOptions& options, Rng& rng) : local(std::move(local_)), heads(options.heads) {
  const std::int64_t cin = local.in_channels();
  const std::int64_t cout = local.out_channels();
  if (heads < 1 || cout % heads != 0) {
    throw ConfigError("LgConv: " + std::to_string(cout) + " channels not divisible by " +
                      std::to_string(heads) + " heads");
  }
  transform = Conv2d(cin, cout, 1, local.stride, true, rng);
  // Logits read only t: a bias or the replicated pooled half would add a per-head
  // constant that cancels in the softmax over pixels.
  attn = Conv2d(cout, heads, 1, 1, false, rng);
  proj = Linear(2 * cout, cout, true, rng);
  gate = Conv2d(2 * cout, 1, 1, 1, true, rng);
  bn = BatchNorm2d(cout, options.gamma0);
}

Tensor LgConv::forward(const Tensor& x_in, bool train, LgConvTrace* trace) const {
  const bool single = x_in.rank() == 3;
  const Tensor x = single ? reshape(x_in, {1, x_in.dim(0), x_in.dim(1), x_in.dim(2)}) : x_in;
  const Tensor y_local = local.forward(x);
  const std::int64_t n = y_local.dim(0), c = y_local.dim(1), h = y_local.dim(2), w = y_local.dim(3);
  const std::int64_t hw = h * w;

  const Tensor t = relu(transform.forward(x));
  const Tensor pooled = avgpool_global(t);
  const Tensor hidden = concat({t, mul(Tensor::ones({1, 1, h, w}, t.dtype()), pooled)}, 1);

  const Tensor att = softmax(reshape(attn.forward(t), {n, heads, hw}), 2);
  // Head j pools its slice of t; the matching slice of the replicated half is
  // constant over pixels, so its attention-weighted sum is the pooled vector itself.
  const Tensor grouped = reshape(t, {n * heads, c / heads, hw});
  const Tensor agg = reshape(matmul(grouped, reshape(att, {n * heads, hw, 1})), {n, c});
  const Tensor vec = proj.forward(concat({agg, reshape(pooled, {n, c})}, 1));

  const Tensor g = sigmoid(gate.forward(hidden));
  const Tensor branch = mul(g, reshape(vec, {n, c, 1, 1}));
  Tensor out = add(y_local, bn.forward(branch, train));

  if (trace != nullptr) {
    trace->local = y_local;
    trace->attention = att;
    trace->gate = g;
  }
  return single ? reshape(out, {c, h, w}) : out;
}

void LgConv::visit(const std::string& prefix, const ParamVisitor& v) {
  local.visit(join(prefix, "local"), v);
  transform.visit(join(prefix, "global.transform"), v);
  attn.visit(join(prefix, "global.attn"), v);
  proj.visit(join(prefix, "global.proj"), v);
  gate.visit(join(prefix, "global.gate"), v);
  bn.visit(join(prefix, "global.bn"), v);
}

}  // namespace kdepth::nn
