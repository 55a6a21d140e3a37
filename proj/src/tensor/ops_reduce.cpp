// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "op_support.hpp"

namespace kdepth {

using detail::should_record;

namespace {

// Splits shape around `axis` into (outer, axis length, inner) extents.
struct AxisSplit {
  std::int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r;
  for (int d = 0; d < axis; ++d) r.outer *= s[static_cast<std::size_t>(d)];
  r.len = s[static_cast<std::size_t>(axis)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) r.inner *= s[d];
  return r;
}

// Scalar reduction of the form out = scale * sum(f(x)); backward g * scale * df(x).
template <class F, class DF>
Tensor reduce_all(const Tensor& x, double scale, F f, DF df) {
  Tensor out = Tensor::zeros({}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    // Accumulate in double with a fixed left-to-right order.
    double acc = 0.0;
    for (T v : x.data<T>()) acc += static_cast<double>(f(v));
    out.data<T>()[0] = static_cast<T>(acc * scale);
  });
  if (should_record({&x})) {
    detail::record(out, {x}, [x, out, scale, df]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T g = out.grad().data<T>()[0] * static_cast<T>(scale);
        Tensor gx = Tensor::zeros(x.shape(), x.dtype());
        auto d = gx.data<T>();
        auto in = x.data<T>();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g * df(in[i]);
        x.accumulate_grad(gx);
      });
    });
  }
  return out;
}

Tensor reduce_axis(const Tensor& x, int axis_in, bool keepdim, bool average) {
  const int axis = detail::normalize_axis(axis_in, x.rank(), average ? "mean" : "sum");
  const AxisSplit sp = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[static_cast<std::size_t>(axis)] = 1;
  } else {
    out_shape.erase(out_shape.begin() + axis);
  }
  const double scale = average ? 1.0 / static_cast<double>(sp.len) : 1.0;
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::int64_t a = 0; a < sp.outer; ++a) {
      for (std::int64_t i = 0; i < sp.inner; ++i) {
        double acc = 0.0;
        for (std::int64_t k = 0; k < sp.len; ++k) acc += in[static_cast<std::size_t>((a * sp.len + k) * sp.inner + i)];
        o[static_cast<std::size_t>(a * sp.inner + i)] = static_cast<T>(acc * scale);
      }
    }
  });
  if (should_record({&x})) {
    detail::record(out, {x}, [x, out, sp, scale]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const Tensor g = out.grad();
        auto gv = g.data<T>();
        Tensor gx = Tensor::zeros(x.shape(), x.dtype());
        auto d = gx.data<T>();
        const T s = static_cast<T>(scale);
        for (std::int64_t a = 0; a < sp.outer; ++a) {
          for (std::int64_t k = 0; k < sp.len; ++k) {
            for (std::int64_t i = 0; i < sp.inner; ++i) {
              d[static_cast<std::size_t>((a * sp.len + k) * sp.inner + i)] =
                  gv[static_cast<std::size_t>(a * sp.inner + i)] * s;
            }
          }
        }
        x.accumulate_grad(gx);
      });
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x) {
  return reduce_all(
      x, 1.0, [](auto v) { return v; }, [](auto v) { return decltype(v){1}; });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return reduce_all(
      x, 1.0 / static_cast<double>(x.numel()), [](auto v) { return v; }, [](auto v) { return decltype(v){1}; });
}

Tensor sum_sq(const Tensor& x) {
  return reduce_all(
      x, 1.0, [](auto v) { return v * v; }, [](auto v) { return decltype(v){2} * v; });
}

Tensor sum(const Tensor& x, int axis, bool keepdim) { return reduce_axis(x, axis, keepdim, false); }

Tensor mean(const Tensor& x, int axis, bool keepdim) { return reduce_axis(x, axis, keepdim, true); }

Tensor softmax(const Tensor& x, int axis_in) {
  const int axis = detail::normalize_axis(axis_in, x.rank(), "softmax");
  const AxisSplit sp = split_axis(x.shape(), axis);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::int64_t a = 0; a < sp.outer; ++a) {
      for (std::int64_t i = 0; i < sp.inner; ++i) {
        const auto at = [&](std::int64_t k) { return static_cast<std::size_t>((a * sp.len + k) * sp.inner + i); };
        T mx = in[at(0)];
        for (std::int64_t k = 1; k < sp.len; ++k) mx = std::max(mx, in[at(k)]);
        T total = 0;
        for (std::int64_t k = 0; k < sp.len; ++k) {
          const T e = std::exp(in[at(k)] - mx);
          o[at(k)] = e;
          total += e;
        }
        const T inv = T{1} / total;
        for (std::int64_t k = 0; k < sp.len; ++k) o[at(k)] *= inv;
      }
    }
  });
  if (should_record({&x})) {
    detail::record(out, {x}, [x, out, sp]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const Tensor g = out.grad();
        auto gv = g.data<T>();
        auto y = out.data<T>();
        Tensor gx = Tensor::zeros(x.shape(), x.dtype());
        auto d = gx.data<T>();
        for (std::int64_t a = 0; a < sp.outer; ++a) {
          for (std::int64_t i = 0; i < sp.inner; ++i) {
            const auto at = [&](std::int64_t k) { return static_cast<std::size_t>((a * sp.len + k) * sp.inner + i); };
            T dot = 0;
            for (std::int64_t k = 0; k < sp.len; ++k) dot += gv[at(k)] * y[at(k)];
            for (std::int64_t k = 0; k < sp.len; ++k) d[at(k)] = y[at(k)] * (gv[at(k)] - dot);
          }
        }
        x.accumulate_grad(gx);
      });
    });
  }
  return out;
}

}  // namespace kdepth
