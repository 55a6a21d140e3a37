// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gtest/gtest.h>

#include "kdepth/nn/module.hpp"
#include "kdepth/tensor/gradcheck.hpp"
#include "kdepth/tensor/ops.hpp"
#include "kdepth/tensor/rng.hpp"
#include "kdepth/tensor/tape.hpp"

namespace kdepth::testing {

constexpr double kGradTol = 1e-4;

// Random-weighted sum, so that every output element gets a distinct upstream gradient.
inline Tensor scalarize(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = rand_uniform(y.shape(), rng, -1.0, 1.0, y.dtype());
  return sum(mul(y, w));
}

inline Tensor param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = rand_uniform(std::move(shape), rng, lo, hi, DType::f64);
  t.set_requires_grad(true);
  return t;
}

// Every trainable weight of a block, under its hierarchical name.
template <class Block>
NamedTensors weights_of(Block& block, const std::string& prefix = "") {
  NamedTensors out;
  block.visit(prefix, [&](const std::string& name, Tensor& t, nn::ParamKind kind) {
    if (kind == nn::ParamKind::weight) out.emplace_back(name, t);
  });
  return out;
}

inline void expect_gradcheck(const std::function<Tensor()>& f, const NamedTensors& params) {
  const auto report = gradcheck(f, params);
  EXPECT_TRUE(report.passed(kGradTol)) << report.summary();
}

inline double max_abs(const Tensor& t) {
  double m = 0;
  for (double v : t.to_vector()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace kdepth::testing
