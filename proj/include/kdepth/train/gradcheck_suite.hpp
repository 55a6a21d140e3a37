// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "kdepth/tensor/gradcheck.hpp"

namespace kdepth::train {

inline constexpr double kGradcheckTolerance = 1e-4;

struct ModuleGradcheck {
  std::string module;
  GradcheckReport report;
  double seconds = 0.0;
};

/// conv2d, batchnorm, softmax, transformer, lgconv, lam, decoder, bin_heads, silog, attentive_kd.
std::vector<std::string> gradcheck_modules();

/// f64 central-difference checks of each module on small random inputs,
/// taking every weight and every input as a checked tensor. An empty name
/// runs all modules; an unknown one is a ConfigError.
std::vector<ModuleGradcheck> run_gradcheck_suite(const std::string& module = "");

}  // namespace kdepth::train
