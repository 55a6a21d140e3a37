// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "op_support.hpp"

namespace kdepth {

using detail::should_record;

namespace {

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, k, ho, wo;
  int stride, pad;
  std::int64_t col_rows() const { return cin * k * k; }
  std::int64_t col_cols() const { return ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::int64_t cols = g.col_cols();
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T{0});
            continue;
          }
          const T* src = x + (c * g.h + iy) * g.w;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* x) {
  const std::int64_t cols = g.col_cols();
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = x + (c * g.h + iy) * g.w;
          const T* src = row + oy * g.wo;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x_in, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  detail::check_same_dtype(x_in, weight, "conv2d");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0) {
    throw ShapeError("conv2d: weight must be [Cout x Cin x k x k] with odd k, got " + to_string(weight.shape()));
  }
  if (stride < 1 || padding < 0) {
    throw ParameterError("conv2d: invalid stride " + std::to_string(stride) + " / padding " + std::to_string(padding));
  }
  const bool single = x_in.rank() == 3;
  if (!single && x_in.rank() != 4) throw ShapeError("conv2d: input must be rank 3 or 4, got " + to_string(x_in.shape()));
  const Tensor x = single ? reshape(x_in, {1, x_in.dim(0), x_in.dim(1), x_in.dim(2)}) : x_in;

  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.cin) {
    throw ShapeError("conv2d: input channels " + std::to_string(g.cin) + " do not match weight " +
                     to_string(weight.shape()));
  }
  if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k) {
    throw ParameterError("conv2d: padded input " + to_string(x.shape()) + " smaller than kernel");
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " for " + std::to_string(g.cout) + " outputs");
  }
  g.ho = (g.h + 2 * padding - g.k) / stride + 1;
  g.wo = (g.w + 2 * padding - g.k) / stride + 1;

  detail::count_macs(g.n * g.cout * g.col_rows() * g.col_cols());
  Tensor out = Tensor::zeros({g.n, g.cout, g.ho, g.wo}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>().data();
    const T* pw = weight.data<T>().data();
    T* po = out.data<T>().data();
    std::vector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
    const std::int64_t in_step = g.cin * g.h * g.w;
    const std::int64_t out_step = g.cout * g.ho * g.wo;
    for (std::int64_t i = 0; i < g.n; ++i) {
      T* o = po + i * out_step;
      if (bias.defined()) {
        auto pb = bias.data<T>();
        for (std::int64_t c = 0; c < g.cout; ++c) std::fill(o + c * g.ho * g.wo, o + (c + 1) * g.ho * g.wo, pb[c]);
      }
      const T* src = px + i * in_step;
      if (!g.pointwise()) {
        im2col(src, g, col.data());
        src = col.data();
      }
      kernels::gemm<T>(false, false, static_cast<int>(g.cout), static_cast<int>(g.col_cols()),
                       static_cast<int>(g.col_rows()), T{1}, pw, static_cast<int>(g.col_rows()), src,
                       static_cast<int>(g.col_cols()), bias.defined() ? T{1} : T{0}, o,
                       static_cast<int>(g.col_cols()));
    }
  });

  if (should_record({&x, &weight, &bias})) {
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    detail::record(out, std::move(inputs), [x, weight, bias, out, g]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const Tensor gout = out.grad();
        const T* pg = gout.data<T>().data();
        const T* px = x.data<T>().data();
        const T* pw = weight.data<T>().data();
        const std::int64_t in_step = g.cin * g.h * g.w;
        const std::int64_t out_step = g.cout * g.ho * g.wo;
        const int rows = static_cast<int>(g.col_rows());
        const int cols = static_cast<int>(g.col_cols());
        const int cout = static_cast<int>(g.cout);
        std::vector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
        std::vector<T> gcol(col.size());

        Tensor gx, gw;
        if (x.requires_grad()) gx = Tensor::zeros(x.shape(), x.dtype());
        if (weight.requires_grad()) gw = Tensor::zeros(weight.shape(), weight.dtype());
        for (std::int64_t i = 0; i < g.n; ++i) {
          const T* gi = pg + i * out_step;
          if (gw.defined()) {
            const T* src = px + i * in_step;
            if (!g.pointwise()) {
              im2col(src, g, col.data());
              src = col.data();
            }
            kernels::gemm<T>(false, true, cout, rows, cols, T{1}, gi, cols, src, cols, i == 0 ? T{0} : T{1},
                             gw.data<T>().data(), rows);
          }
          if (gx.defined()) {
            T* dst = gx.data<T>().data() + i * in_step;
            if (g.pointwise()) {
              kernels::gemm<T>(true, false, rows, cols, cout, T{1}, pw, rows, gi, cols, T{0}, dst, cols);
            } else {
              kernels::gemm<T>(true, false, rows, cols, cout, T{1}, pw, rows, gi, cols, T{0}, gcol.data(), cols);
              col2im_add(gcol.data(), g, dst);
            }
          }
        }
        if (gx.defined()) x.accumulate_grad(gx);
        if (gw.defined()) weight.accumulate_grad(gw);
        if (bias.defined() && bias.requires_grad()) {
          Tensor gb = Tensor::zeros(bias.shape(), bias.dtype());
          auto d = gb.data<T>();
          const std::int64_t plane = g.ho * g.wo;
          for (std::int64_t i = 0; i < g.n; ++i) {
            for (std::int64_t c = 0; c < g.cout; ++c) {
              const T* p = pg + i * out_step + c * plane;
              T acc = 0;
              for (std::int64_t j = 0; j < plane; ++j) acc += p[j];
              d[static_cast<std::size_t>(c)] += acc;
            }
          }
          bias.accumulate_grad(gb);
        }
      });
    });
  }
  return single ? reshape(out, {g.cout, g.ho, g.wo}) : out;
}

Tensor avgpool_global(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("avgpool_global: need at least 2 axes, got " + to_string(x.shape()));
  const std::int64_t hw = x.dim(-1) * x.dim(-2);
  if (hw == 0) throw ShapeError("avgpool_global: empty spatial extent");
  const std::int64_t planes = x.numel() / hw;
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 1] = 1;
  out_shape[out_shape.size() - 2] = 1;
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::int64_t p = 0; p < planes; ++p) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < hw; ++j) acc += in[static_cast<std::size_t>(p * hw + j)];
      o[static_cast<std::size_t>(p)] = static_cast<T>(acc / static_cast<double>(hw));
    }
  });
  if (should_record({&x})) {
    detail::record(out, {x}, [x, out, hw, planes]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const Tensor g = out.grad();
        auto gv = g.data<T>();
        Tensor gx = Tensor::zeros(x.shape(), x.dtype());
        auto d = gx.data<T>();
        const T inv = T{1} / static_cast<T>(hw);
        for (std::int64_t p = 0; p < planes; ++p) {
          const T v = gv[static_cast<std::size_t>(p)] * inv;
          for (std::int64_t j = 0; j < hw; ++j) d[static_cast<std::size_t>(p * hw + j)] = v;
        }
        x.accumulate_grad(gx);
      });
    });
  }
  return out;
}

Tensor resize_nearest(const Tensor& x, std::int64_t oh, std::int64_t ow) {
  if (x.rank() < 2) throw ShapeError("resize_nearest: need at least 2 axes, got " + to_string(x.shape()));
  if (oh < 1 || ow < 1) throw ParameterError("resize_nearest: target size must be positive");
  const std::int64_t h = x.dim(-2);
  const std::int64_t w = x.dim(-1);
  const std::int64_t planes = x.numel() / (h * w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;
  std::vector<std::int64_t> src_y(static_cast<std::size_t>(oh)), src_x(static_cast<std::size_t>(ow));
  for (std::int64_t i = 0; i < oh; ++i) src_y[static_cast<std::size_t>(i)] = i * h / oh;
  for (std::int64_t j = 0; j < ow; ++j) src_x[static_cast<std::size_t>(j)] = j * w / ow;

  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::int64_t p = 0; p < planes; ++p) {
      for (std::int64_t i = 0; i < oh; ++i) {
        const T* row = in.data() + (p * h + src_y[static_cast<std::size_t>(i)]) * w;
        T* dst = o.data() + (p * oh + i) * ow;
        for (std::int64_t j = 0; j < ow; ++j) dst[j] = row[src_x[static_cast<std::size_t>(j)]];
      }
    }
  });
  if (should_record({&x})) {
    detail::record(out, {x}, [x, out, h, w, oh, ow, planes, src_y, src_x]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const Tensor g = out.grad();
        auto gv = g.data<T>();
        Tensor gx = Tensor::zeros(x.shape(), x.dtype());
        auto d = gx.data<T>();
        for (std::int64_t p = 0; p < planes; ++p) {
          for (std::int64_t i = 0; i < oh; ++i) {
            T* row = d.data() + (p * h + src_y[static_cast<std::size_t>(i)]) * w;
            const T* src = gv.data() + (p * oh + i) * ow;
            for (std::int64_t j = 0; j < ow; ++j) row[src_x[static_cast<std::size_t>(j)]] += src[j];
          }
        }
        x.accumulate_grad(gx);
      });
    });
  }
  return out;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  if (factor < 1) throw ParameterError("upsample_nearest: factor must be >= 1");
  if (x.rank() < 2) throw ShapeError("upsample_nearest: need at least 2 axes, got " + to_string(x.shape()));
  return resize_nearest(x, x.dim(-2) * factor, x.dim(-1) * factor);
}

}  // namespace kdepth
