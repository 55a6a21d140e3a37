// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kdepth/nn/module.hpp"
#include "kdepth/tensor/ops.hpp"

namespace kdepth::nn {

struct Conv2d {
  Tensor w;  // [Cout x Cin x k x k]
  Tensor b;  // [Cout] or undefined
  int stride = 1;
  int padding = 0;

  Conv2d() = default;
  /// Kaiming-initialized; padding defaults to "same" for odd k.
  Conv2d(std::int64_t cin, std::int64_t cout, int k, int stride, bool bias, Rng& rng);

  std::int64_t in_channels() const { return w.dim(1); }
  std::int64_t out_channels() const { return w.dim(0); }
  int kernel() const { return static_cast<int>(w.dim(2)); }

  Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, padding); }
  void visit(const std::string& prefix, const ParamVisitor& v);
};

struct BatchNorm2d {
  Tensor gamma, beta, running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::int64_t channels, double gamma0 = 1.0);

  Tensor forward(const Tensor& x, bool train) const {
    return batch_norm(x, gamma, beta, running_mean, running_var, train, momentum, eps);
  }
  void visit(const std::string& prefix, const ParamVisitor& v);
};

struct Linear {
  Tensor w;  // [out x in]
  Tensor b;  // [out] or undefined

  Linear() = default;
  Linear(std::int64_t in, std::int64_t out, bool bias, Rng& rng, bool relu_gain = false);

  Tensor forward(const Tensor& x) const { return linear(x, w, b); }
  void visit(const std::string& prefix, const ParamVisitor& v);
};

struct LayerNorm {
  Tensor gamma, beta;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(std::int64_t features);

  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
  void visit(const std::string& prefix, const ParamVisitor& v);
};

}  // namespace kdepth::nn
