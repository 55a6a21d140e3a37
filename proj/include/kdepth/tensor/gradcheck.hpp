// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kdepth/tensor/tensor.hpp"

namespace kdepth {

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  double max_rel_error() const;
  /// Entry holding the largest relative error.
  const GradcheckEntry& worst() const;
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
  std::string summary() const;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Compares tape gradients of the scalar `loss_fn()` with respect to each of
/// `params` (f64, requires_grad) against central differences with step `eps`.
/// Relative error per element is |a - n| / max(|a|, |n|, 1e-8).
/// `loss_fn` must be deterministic. Throws DivergenceError on a non-finite loss.
GradcheckReport gradcheck(const std::function<Tensor()>& loss_fn, const NamedTensors& params, double eps = 1e-5);

}  // namespace kdepth
