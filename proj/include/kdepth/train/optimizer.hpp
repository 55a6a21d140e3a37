// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "kdepth/nn/module.hpp"

namespace kdepth::train {

/// lr_start + (lr_end - lr_start) * t / (total - 1); lr_start when total == 1.
double linear_lr(std::int64_t t, std::int64_t total, double lr_start, double lr_end);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Adam with decoupled weight decay. Per step, for every unfrozen weight that
/// holds a gradient:
///   p -= lr * wd * p
///   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
///   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// Frozen weights and weights without a gradient are left untouched.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(nn::ParameterStore& store, double lr);
  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }

  /// Moments as "<prefix>m/<name>" and "<prefix>v/<name>" plus "<prefix>step".
  void export_state(const std::string& prefix, std::map<std::string, Tensor>& out) const;
  /// Inverse of export_state; FormatError when a moment has the wrong shape.
  void import_state(const std::string& prefix, const std::map<std::string, Tensor>& in);

 private:
  struct Moments {
    Tensor m, v;
  };
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace kdepth::train
