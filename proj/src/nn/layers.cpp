// SPDX-License-Identifier: Apache-2.0
#include "kdepth/nn/layers.hpp"

#include <cmath>

namespace kdepth::nn {

Tensor kaiming(Shape shape, std::int64_t fan_in, Rng& rng) {
  return randn(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

Tensor lecun(Shape shape, std::int64_t fan_in, Rng& rng) {
  return randn(std::move(shape), rng, std::sqrt(1.0 / static_cast<double>(fan_in)));
}

Conv2d::Conv2d(std::int64_t cin, std::int64_t cout, int k, int stride_, bool bias, Rng& rng)
    : stride(stride_), padding((k - 1) / 2) {
  if (k % 2 == 0) throw ConfigError("Conv2d: kernel size must be odd, got " + std::to_string(k));
  w = kaiming({cout, cin, k, k}, cin * k * k, rng).set_requires_grad(true);
  if (bias) b = Tensor::zeros({cout}).set_requires_grad(true);
}

void Conv2d::visit(const std::string& prefix, const ParamVisitor& v) {
  v(join(prefix, "w"), w, ParamKind::weight);
  if (b.defined()) v(join(prefix, "b"), b, ParamKind::weight);
}

BatchNorm2d::BatchNorm2d(std::int64_t channels, double gamma0) {
  gamma = Tensor::full({channels}, gamma0).set_requires_grad(true);
  beta = Tensor::zeros({channels}).set_requires_grad(true);
  running_mean = Tensor::zeros({channels});
  running_var = Tensor::ones({channels});
}

void BatchNorm2d::visit(const std::string& prefix, const ParamVisitor& v) {
  v(join(prefix, "gamma"), gamma, ParamKind::weight);
  v(join(prefix, "beta"), beta, ParamKind::weight);
  v(join(prefix, "running_mean"), running_mean, ParamKind::buffer);
  v(join(prefix, "running_var"), running_var, ParamKind::buffer);
}

Linear::Linear(std::int64_t in, std::int64_t out, bool bias, Rng& rng, bool relu_gain) {
  w = (relu_gain ? kaiming({out, in}, in, rng) : lecun({out, in}, in, rng)).set_requires_grad(true);
  if (bias) b = Tensor::zeros({out}).set_requires_grad(true);
}

void Linear::visit(const std::string& prefix, const ParamVisitor& v) {
  v(join(prefix, "w"), w, ParamKind::weight);
  if (b.defined()) v(join(prefix, "b"), b, ParamKind::weight);
}

LayerNorm::LayerNorm(std::int64_t features) {
  gamma = Tensor::ones({features}).set_requires_grad(true);
  beta = Tensor::zeros({features}).set_requires_grad(true);
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& v) {
  v(join(prefix, "gamma"), gamma, ParamKind::weight);
  v(join(prefix, "beta"), beta, ParamKind::weight);
}

}  // namespace kdepth::nn
