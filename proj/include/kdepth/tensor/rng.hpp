// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random numbers. A stream is identified by a 64-bit key; draw i
// of a stream is a pure function of (key, i), so sequences are identical on
// every platform and independent sub-streams can be split off by name without
// sharing state.

#pragma once

#include <cstdint>

#include "kdepth/tensor/tensor.hpp"

namespace kdepth {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent child stream; splitting with the same id twice gives the same stream.
  Rng split(std::uint64_t stream_id) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter, int) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Tensor of i.i.d. N(0, stddev^2) draws.
Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, DType dtype = default_dtype());
/// Tensor of i.i.d. U[lo, hi) draws.
Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi, DType dtype = default_dtype());

}  // namespace kdepth
