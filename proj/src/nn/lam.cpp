// SPDX-License-Identifier: Apache-2.0
#include "kdepth/nn/lam.hpp"

#include <cmath>

namespace kdepth::nn {

Lam::Lam(std::int64_t channels, Rng& rng) {
  query = Linear(channels, channels, true, rng);
  query.w.copy_data_from(Tensor::zeros(query.w.shape(), query.w.dtype()));
  key = Linear(channels, channels, false, rng);
}

LamOutput Lam::forward(const Tensor& f) const {
  if (f.rank() != 4 || f.dim(1) != query.w.dim(1)) {
    throw ShapeError("Lam: expected [N x " + std::to_string(query.w.dim(1)) + " x H x W], got " + to_string(f.shape()));
  }
  const std::int64_t n = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3), hw = h * w;
  const Tensor q = query.forward(reshape(avgpool_global(f), {n, 1, c}));
  const Tensor k = key.forward(permute(reshape(f, {n, c, hw}), {0, 2, 1}));
  const Tensor logits = mul_scalar(matmul(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(c)));
  const Tensor a = reshape(mul_scalar(softmax(logits, 2), static_cast<double>(hw)), {n, 1, h, w});
  return {mul(f, a), a};
}

void Lam::visit(const std::string& prefix, const ParamVisitor& v) {
  query.visit(join(prefix, "query"), v);
  key.visit(join(prefix, "key"), v);
}

}  // namespace kdepth::nn
