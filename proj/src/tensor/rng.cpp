// SPDX-License-Identifier: Apache-2.0
#include "kdepth/tensor/rng.hpp"

#include <cmath>
#include <numbers>

namespace kdepth {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed + kGolden)) {}

Rng Rng::split(std::uint64_t stream_id) const {
  return Rng(mix64(key_ ^ mix64(stream_id * kGolden + 0x632BE59BD9B4E019ull)), 0, 0);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t ctr = counter_++;
  return mix64(mix64(key_ + ctr * kGolden) ^ key_);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor randn(Shape shape, Rng& rng, double stddev, DType dtype) {
  Tensor t = Tensor::zeros(std::move(shape), dtype);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, stddev * rng.normal());
  return t;
}

Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi, DType dtype) {
  Tensor t = Tensor::zeros(std::move(shape), dtype);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

}  // namespace kdepth
