// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <string>

#include "op_support.hpp"

namespace kdepth {

using detail::should_record;

namespace {

// out = fwd(a, b) with broadcasting; backward gives g * da(a, b) and g * db(a, b).
template <class Fwd, class DA, class DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  detail::check_same_dtype(a, b, name);
  const Shape out_shape = detail::broadcast_shape(a.shape(), b.shape(), name);
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  const bool same = a.shape() == b.shape();
  const auto sa = detail::broadcast_strides(a.shape(), out_shape);
  const auto sb = detail::broadcast_strides(b.shape(), out_shape);

  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto o = out.data<T>();
    if (same) {
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(x[i], y[i]);
    } else {
      detail::odometer(out_shape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
        o[static_cast<std::size_t>(i)] = fwd(x[static_cast<std::size_t>(ia)], y[static_cast<std::size_t>(ib)]);
      });
    }
  });

  if (should_record({&a, &b})) {
    detail::record(out, {a, b}, [a, b, out, sa, sb, same, da, db]() mutable {
      dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const Tensor g = out.grad();
        auto gv = g.data<T>();
        auto x = a.data<T>();
        auto y = b.data<T>();
        const Shape& os = out.shape();
        if (a.requires_grad()) {
          Tensor ga = Tensor::zeros(os, a.dtype());
          auto d = ga.data<T>();
          if (same) {
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = gv[i] * da(x[i], y[i]);
          } else {
            detail::odometer(os, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
              const auto ui = static_cast<std::size_t>(i);
              d[ui] = gv[ui] * da(x[static_cast<std::size_t>(ia)], y[static_cast<std::size_t>(ib)]);
            });
          }
          a.accumulate_grad(detail::reduce_to<T>(ga, a.shape()));
        }
        if (b.requires_grad()) {
          Tensor gb = Tensor::zeros(os, b.dtype());
          auto d = gb.data<T>();
          if (same) {
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = gv[i] * db(x[i], y[i]);
          } else {
            detail::odometer(os, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
              const auto ui = static_cast<std::size_t>(i);
              d[ui] = gv[ui] * db(x[static_cast<std::size_t>(ia)], y[static_cast<std::size_t>(ib)]);
            });
          }
          b.accumulate_grad(detail::reduce_to<T>(gb, b.shape()));
        }
      });
    });
  }
  return out;
}

// y = fwd(x); backward gives g * deriv(x, y).
template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(in[i]);
  });
  if (should_record({&x})) {
    detail::record(out, {x}, [x, out, deriv]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const Tensor g = out.grad();
        auto gv = g.data<T>();
        auto in = x.data<T>();
        auto y = out.data<T>();
        Tensor gx = Tensor::zeros(x.shape(), x.dtype());
        auto d = gx.data<T>();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = gv[i] * deriv(in[i], y[i]);
        x.accumulate_grad(gx);
      });
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](auto x, auto y) { return x + y; }, [](auto x, auto) { return decltype(x){1}; },
      [](auto x, auto) { return decltype(x){1}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](auto x, auto y) { return x - y; }, [](auto x, auto) { return decltype(x){1}; },
      [](auto x, auto) { return decltype(x){-1}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](auto x, auto y) { return x * y; }, [](auto, auto y) { return y; },
      [](auto x, auto) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](auto x, auto y) { return x / y; }, [](auto, auto y) { return decltype(y){1} / y; },
      [](auto x, auto y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(
      x, [c](auto v) { return v + static_cast<decltype(v)>(c); }, [](auto v, auto) { return decltype(v){1}; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary(
      x, [c](auto v) { return v * static_cast<decltype(v)>(c); },
      [c](auto v, auto) { return static_cast<decltype(v)>(c); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](auto v) { return v > 0 ? v : decltype(v){0}; },
      [](auto v, auto) { return v > 0 ? decltype(v){1} : decltype(v){0}; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](auto v) {
        using T = decltype(v);
        if (v >= 0) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](auto, auto y) { return y * (decltype(y){1} - y); });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x,
      [](auto v) {
        using T = decltype(v);
        const T k = static_cast<T>(0.7978845608028654);
        const T u = k * (v + static_cast<T>(0.044715) * v * v * v);
        return static_cast<T>(0.5) * v * (T{1} + std::tanh(u));
      },
      [](auto v, auto) {
        using T = decltype(v);
        const T k = static_cast<T>(0.7978845608028654);
        const T c = static_cast<T>(0.044715);
        const T u = k * (v + c * v * v * v);
        const T t = std::tanh(u);
        const T du = k * (T{1} + T{3} * c * v * v);
        return static_cast<T>(0.5) * (T{1} + t) + static_cast<T>(0.5) * v * (T{1} - t * t) * du;
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](auto v) { return std::exp(v); }, [](auto, auto y) { return y; });
}

Tensor log(const Tensor& x) {
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (T v : x.data<T>()) {
      if (!(v > T{0})) throw DomainError("log of non-positive value " + std::to_string(v));
    }
  });
  return unary(
      x, [](auto v) { return std::log(v); }, [](auto v, auto) { return decltype(v){1} / v; });
}

Tensor sqrt(const Tensor& x) {
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (T v : x.data<T>()) {
      if (!(v >= T{0})) throw DomainError("sqrt of negative value " + std::to_string(v));
    }
  });
  return unary(
      x, [](auto v) { return std::sqrt(v); }, [](auto, auto y) { return decltype(y){0.5} / y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](auto v) { return v * v; }, [](auto v, auto) { return decltype(v){2} * v; });
}

Tensor clamp_min(const Tensor& x, double lo) {
  return unary(
      x,
      [lo](auto v) {
        const auto l = static_cast<decltype(v)>(lo);
        return v > l ? v : l;
      },
      [lo](auto v, auto) { return v > static_cast<decltype(v)>(lo) ? decltype(v){1} : decltype(v){0}; });
}

}  // namespace kdepth
