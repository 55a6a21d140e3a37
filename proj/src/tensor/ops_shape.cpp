// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>

#include "op_support.hpp"

namespace kdepth {

using detail::should_record;

namespace {

template <class T>
Tensor with_data(Shape shape, std::vector<T> values) {
  if constexpr (std::is_same_v<T, float>) {
    return Tensor::from_f32(std::move(shape), std::move(values));
  } else {
    return Tensor::from_f64(std::move(shape), std::move(values));
  }
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one inferred dimension");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  Tensor out = dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = x.data<T>();
    return with_data<T>(shape, std::vector<T>(d.begin(), d.end()));
  });
  if (should_record({&x})) {
    detail::record(out, {x}, [x, out]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad().data<T>();
        x.accumulate_grad(with_data<T>(x.shape(), std::vector<T>(g.begin(), g.end())));
      });
    });
  }
  return out;
}

Tensor permute(const Tensor& x, std::vector<int> order) {
  const int r = x.rank();
  if (static_cast<int>(order.size()) != r) throw ShapeError("permute: order length does not match rank");
  std::vector<int> seen(static_cast<std::size_t>(r), 0);
  for (int& o : order) {
    o = detail::normalize_axis(o, r, "permute");
    if (seen[static_cast<std::size_t>(o)]++) throw ShapeError("permute: repeated axis");
  }
  const auto in_strides = detail::contiguous_strides(x.shape());
  Shape out_shape(static_cast<std::size_t>(r));
  std::vector<std::int64_t> src_strides(static_cast<std::size_t>(r));
  for (int d = 0; d < r; ++d) {
    out_shape[static_cast<std::size_t>(d)] = x.shape()[static_cast<std::size_t>(order[static_cast<std::size_t>(d)])];
    src_strides[static_cast<std::size_t>(d)] = in_strides[static_cast<std::size_t>(order[static_cast<std::size_t>(d)])];
  }
  const std::vector<std::int64_t> unused(static_cast<std::size_t>(r), 0);
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    detail::odometer(out_shape, src_strides, unused, [&](std::int64_t i, std::int64_t s, std::int64_t) {
      o[static_cast<std::size_t>(i)] = in[static_cast<std::size_t>(s)];
    });
  });
  if (should_record({&x})) {
    detail::record(out, {x}, [x, out, out_shape, src_strides, unused]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad().data<T>();
        Tensor gx = Tensor::zeros(x.shape(), x.dtype());
        auto d = gx.data<T>();
        detail::odometer(out_shape, src_strides, unused, [&](std::int64_t i, std::int64_t s, std::int64_t) {
          d[static_cast<std::size_t>(s)] = g[static_cast<std::size_t>(i)];
        });
        x.accumulate_grad(gx);
      });
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, int axis_in) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor& first = parts.front();
  const int axis = detail::normalize_axis(axis_in, first.rank(), "concat");
  Shape out_shape = first.shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const Tensor& p : parts) {
    detail::check_same_dtype(first, p, "concat");
    if (p.rank() != first.rank()) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < first.rank(); ++d) {
      if (d != axis && p.shape()[static_cast<std::size_t>(d)] != first.shape()[static_cast<std::size_t>(d)]) {
        throw ShapeError("concat: " + to_string(p.shape()) + " incompatible with " + to_string(first.shape()) +
                         " along axis " + std::to_string(axis));
      }
    }
    out_shape[static_cast<std::size_t>(axis)] += p.shape()[static_cast<std::size_t>(axis)];
  }
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < first.rank(); ++d) inner *= out_shape[static_cast<std::size_t>(d)];
  const std::int64_t out_row = out_shape[static_cast<std::size_t>(axis)] * inner;

  Tensor out = Tensor::zeros(out_shape, first.dtype());
  std::vector<std::int64_t> offsets;
  dispatch(first.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = out.data<T>();
    std::int64_t offset = 0;
    for (const Tensor& p : parts) {
      offsets.push_back(offset);
      auto in = p.data<T>();
      const std::int64_t row = p.shape()[static_cast<std::size_t>(axis)] * inner;
      for (std::int64_t a = 0; a < outer; ++a) {
        std::copy_n(in.data() + a * row, row, o.data() + a * out_row + offset);
      }
      offset += row;
    }
  });

  bool any = false;
  for (const Tensor& p : parts) any = any || should_record({&p});
  if (any) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    detail::record(out, inputs, [inputs, out, offsets, outer, out_row, inner, axis]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad().data<T>();
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          Tensor& p = inputs[k];
          if (!p.requires_grad()) continue;
          Tensor gp = Tensor::zeros(p.shape(), p.dtype());
          auto d = gp.data<T>();
          const std::int64_t row = p.shape()[static_cast<std::size_t>(axis)] * inner;
          for (std::int64_t a = 0; a < outer; ++a) {
            std::copy_n(g.data() + a * out_row + offsets[k], row, d.data() + a * row);
          }
          p.accumulate_grad(gp);
        }
      });
    });
  }
  return out;
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, int axis_in, std::int64_t begin, std::int64_t end) {
  const int axis = detail::normalize_axis(axis_in, x.rank(), "slice");
  const std::int64_t len = x.shape()[static_cast<std::size_t>(axis)];
  if (begin < 0 || end > len || begin > end) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for " +
                     to_string(x.shape()));
  }
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.shape()[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[static_cast<std::size_t>(d)];
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = end - begin;
  const std::int64_t in_row = len * inner;
  const std::int64_t out_row = (end - begin) * inner;
  const std::int64_t offset = begin * inner;

  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::int64_t a = 0; a < outer; ++a) std::copy_n(in.data() + a * in_row + offset, out_row, o.data() + a * out_row);
  });
  if (should_record({&x})) {
    detail::record(out, {x}, [x, out, outer, in_row, out_row, offset]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad().data<T>();
        Tensor gx = Tensor::zeros(x.shape(), x.dtype());
        auto d = gx.data<T>();
        for (std::int64_t a = 0; a < outer; ++a) {
          std::copy_n(g.data() + a * out_row, out_row, d.data() + a * in_row + offset);
        }
        x.accumulate_grad(gx);
      });
    });
  }
  return out;
}

Tensor flip_width(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("flip_width: rank-0 input");
  const std::int64_t w = x.dim(-1);
  const std::int64_t rows = w == 0 ? 0 : x.numel() / w;
  auto flip = [rows, w](auto tag, const Tensor& src, Tensor& dst) {
    using T = decltype(tag);
    auto in = src.data<T>();
    auto o = dst.data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t j = 0; j < w; ++j) o[static_cast<std::size_t>(r * w + j)] = in[static_cast<std::size_t>(r * w + w - 1 - j)];
    }
  };
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) { flip(tag, x, out); });
  if (should_record({&x})) {
    detail::record(out, {x}, [x, out, flip]() mutable {
      Tensor gx = Tensor::zeros(x.shape(), x.dtype());
      const Tensor g = out.grad();
      dispatch(x.dtype(), [&](auto tag) { flip(tag, g, gx); });
      x.accumulate_grad(gx);
    });
  }
  return out;
}

}  // namespace kdepth
