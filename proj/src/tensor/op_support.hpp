// SPDX-License-Identifier: Apache-2.0
//
// Internal helpers shared by the op implementations.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kdepth/tensor/ops.hpp"
#include "kdepth/tensor/tape.hpp"

namespace kdepth::detail {

void count_macs(std::int64_t n);

inline void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw ShapeError(std::string(op) + ": dtype mismatch " + to_string(a.dtype()) + " vs " + to_string(b.dtype()));
  }
}

inline int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  }
  return a;
}

/// Records `fn` on the active tape with `out` as output. Callers check
/// should_record() first.
template <class Fn>
void record(const Tensor& out, std::vector<Tensor> inputs, Fn&& fn) {
  Tape::active()->record(std::move(inputs), out, std::forward<Fn>(fn));
}

/// Element strides of a contiguous row-major shape.
inline std::vector<std::int64_t> contiguous_strides(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d) {
    s[static_cast<std::size_t>(d)] = s[static_cast<std::size_t>(d) + 1] * shape[static_cast<std::size_t>(d) + 1];
  }
  return s;
}

/// Strides of `in` viewed as broadcast to `out` (0 where `in` has size 1).
/// `in` is right-aligned against `out`.
inline std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  const auto base = contiguous_strides(in);
  std::vector<std::int64_t> s(out.size(), 0);
  const std::size_t offset = out.size() - in.size();
  for (std::size_t d = 0; d < in.size(); ++d) {
    s[d + offset] = in[d] == 1 ? 0 : base[d];
  }
  return s;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

/// Visits every index of `shape` in row-major order, calling
/// f(flat, offset_a, offset_b) with offsets computed from the given strides.
template <class F>
void odometer(const Shape& shape, const std::vector<std::int64_t>& sa, const std::vector<std::int64_t>& sb, F&& f) {
  const int r = static_cast<int>(shape.size());
  if (numel(shape) == 0) return;
  if (r == 0) {
    f(std::int64_t{0}, std::int64_t{0}, std::int64_t{0});
    return;
  }
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  const std::int64_t inner = shape.back();
  const std::int64_t ja = sa.back();
  const std::int64_t jb = sb.back();
  std::int64_t ia = 0, ib = 0, flat = 0;
  while (true) {
    for (std::int64_t j = 0; j < inner; ++j) f(flat + j, ia + j * ja, ib + j * jb);
    flat += inner;
    int d = r - 2;
    for (; d >= 0; --d) {
      const auto ud = static_cast<std::size_t>(d);
      ++idx[ud];
      ia += sa[ud];
      ib += sb[ud];
      if (idx[ud] < shape[ud]) break;
      ia -= sa[ud] * shape[ud];
      ib -= sb[ud] * shape[ud];
      idx[ud] = 0;
    }
    if (d < 0) break;
  }
}

/// Sums `g` (shaped `from`) down to the broadcast source shape `to`.
template <class T>
Tensor reduce_to(const Tensor& g, const Shape& to) {
  if (g.shape() == to) return g;
  Tensor out = Tensor::zeros(to, g.dtype());
  auto dst = out.data<T>();
  auto src = g.data<T>();
  const auto st = broadcast_strides(to, g.shape());
  const std::vector<std::int64_t> zero(g.shape().size(), 0);
  odometer(g.shape(), st, zero, [&](std::int64_t i, std::int64_t it, std::int64_t) {
    dst[static_cast<std::size_t>(it)] += src[static_cast<std::size_t>(i)];
  });
  return out;
}

}  // namespace kdepth::detail
