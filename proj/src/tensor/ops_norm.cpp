// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "op_support.hpp"

namespace kdepth {

using detail::should_record;

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor running_mean, Tensor running_var,
                  bool training, double momentum, double eps) {
  if (x.rank() < 2) throw ShapeError("batch_norm: input must be [N x C x ...], got " + to_string(x.shape()));
  if (!(eps > 0.0)) throw ParameterError("batch_norm: eps must be positive");
  const std::int64_t n = x.dim(0);
  const std::int64_t c = x.dim(1);
  const std::int64_t plane = x.numel() / (n * c);
  const std::int64_t count = n * plane;
  for (const Tensor* p : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (p->rank() != 1 || p->dim(0) != c) {
      throw ShapeError("batch_norm: per-channel tensor " + to_string(p->shape()) + " for " + std::to_string(c) +
                       " channels");
    }
  }
  if (training && count < 2) throw ShapeError("batch_norm: training mode needs more than one value per channel");

  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  // Per-channel (mean, inverse std) actually used for normalization.
  std::vector<double> mu(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));

  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    auto gm = gamma.data<T>();
    auto bt = beta.data<T>();
    auto rm = running_mean.data<T>();
    auto rv = running_var.data<T>();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto uc = static_cast<std::size_t>(ch);
      double m, var;
      if (training) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
          const T* p = in.data() + (i * c + ch) * plane;
          for (std::int64_t j = 0; j < plane; ++j) s += p[j];
        }
        m = s / static_cast<double>(count);
        double ss = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
          const T* p = in.data() + (i * c + ch) * plane;
          for (std::int64_t j = 0; j < plane; ++j) {
            const double d = p[j] - m;
            ss += d * d;
          }
        }
        var = ss / static_cast<double>(count);
        const double unbiased = ss / static_cast<double>(count - 1);
        rm[uc] = static_cast<T>((1.0 - momentum) * rm[uc] + momentum * m);
        rv[uc] = static_cast<T>((1.0 - momentum) * rv[uc] + momentum * unbiased);
      } else {
        m = rm[uc];
        var = rv[uc];
      }
      mu[uc] = m;
      inv_std[uc] = 1.0 / std::sqrt(var + eps);
      const T scale = static_cast<T>(gm[uc] * inv_std[uc]);
      const T shift = static_cast<T>(bt[uc] - gm[uc] * inv_std[uc] * m);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* p = in.data() + (i * c + ch) * plane;
        T* q = o.data() + (i * c + ch) * plane;
        for (std::int64_t j = 0; j < plane; ++j) q[j] = p[j] * scale + shift;
      }
    }
  });

  if (should_record({&x, &gamma, &beta})) {
    detail::record(out, {x, gamma, beta}, [x, gamma, beta, out, mu, inv_std, training, n, c, plane, count]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad().data<T>();
        auto in = x.data<T>();
        auto gm = gamma.data<T>();
        Tensor gx, ggamma, gbeta;
        if (x.requires_grad()) gx = Tensor::zeros(x.shape(), x.dtype());
        if (gamma.requires_grad()) ggamma = Tensor::zeros(gamma.shape(), gamma.dtype());
        if (beta.requires_grad()) gbeta = Tensor::zeros(beta.shape(), beta.dtype());
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const auto uc = static_cast<std::size_t>(ch);
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t base = (i * c + ch) * plane;
            for (std::int64_t j = 0; j < plane; ++j) {
              const double xhat = (in[static_cast<std::size_t>(base + j)] - mu[uc]) * inv_std[uc];
              sum_g += g[static_cast<std::size_t>(base + j)];
              sum_gx += g[static_cast<std::size_t>(base + j)] * xhat;
            }
          }
          if (ggamma.defined()) ggamma.data<T>()[uc] = static_cast<T>(sum_gx);
          if (gbeta.defined()) gbeta.data<T>()[uc] = static_cast<T>(sum_g);
          if (!gx.defined()) continue;
          auto d = gx.data<T>();
          const double k = gm[uc] * inv_std[uc];
          for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t base = (i * c + ch) * plane;
            for (std::int64_t j = 0; j < plane; ++j) {
              const auto idx = static_cast<std::size_t>(base + j);
              if (training) {
                const double xhat = (in[idx] - mu[uc]) * inv_std[uc];
                const double cnt = static_cast<double>(count);
                d[idx] = static_cast<T>(k * (g[idx] - sum_g / cnt - xhat * sum_gx / cnt));
              } else {
                d[idx] = static_cast<T>(k * g[idx]);
              }
            }
          }
        }
        if (gx.defined()) x.accumulate_grad(gx);
        if (ggamma.defined()) gamma.accumulate_grad(ggamma);
        if (gbeta.defined()) beta.accumulate_grad(gbeta);
      });
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
  const std::int64_t d = x.dim(-1);
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
    throw ShapeError("layer_norm: affine parameters do not match feature size " + std::to_string(d));
  }
  const std::int64_t rows = x.numel() / d;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  std::vector<double> mu(static_cast<std::size_t>(rows)), inv_std(static_cast<std::size_t>(rows));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    auto gm = gamma.data<T>();
    auto bt = beta.data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* p = in.data() + r * d;
      double s = 0.0;
      for (std::int64_t j = 0; j < d; ++j) s += p[j];
      const double m = s / static_cast<double>(d);
      double ss = 0.0;
      for (std::int64_t j = 0; j < d; ++j) ss += (p[j] - m) * (p[j] - m);
      const double is = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
      mu[static_cast<std::size_t>(r)] = m;
      inv_std[static_cast<std::size_t>(r)] = is;
      T* q = o.data() + r * d;
      for (std::int64_t j = 0; j < d; ++j) {
        q[j] = static_cast<T>((p[j] - m) * is) * gm[static_cast<std::size_t>(j)] + bt[static_cast<std::size_t>(j)];
      }
    }
  });
  if (should_record({&x, &gamma, &beta})) {
    detail::record(out, {x, gamma, beta}, [x, gamma, beta, out, mu, inv_std, rows, d]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad().data<T>();
        auto in = x.data<T>();
        auto gm = gamma.data<T>();
        Tensor gx = x.requires_grad() ? Tensor::zeros(x.shape(), x.dtype()) : Tensor();
        std::vector<double> ggamma(static_cast<std::size_t>(d), 0.0), gbeta(static_cast<std::size_t>(d), 0.0);
        for (std::int64_t r = 0; r < rows; ++r) {
          const auto ur = static_cast<std::size_t>(r);
          double s1 = 0.0, s2 = 0.0;
          for (std::int64_t j = 0; j < d; ++j) {
            const auto idx = static_cast<std::size_t>(r * d + j);
            const double xhat = (in[idx] - mu[ur]) * inv_std[ur];
            const double gh = g[idx] * gm[static_cast<std::size_t>(j)];
            ggamma[static_cast<std::size_t>(j)] += g[idx] * xhat;
            gbeta[static_cast<std::size_t>(j)] += g[idx];
            s1 += gh;
            s2 += gh * xhat;
          }
          if (!gx.defined()) continue;
          auto dx = gx.data<T>();
          const double dd = static_cast<double>(d);
          for (std::int64_t j = 0; j < d; ++j) {
            const auto idx = static_cast<std::size_t>(r * d + j);
            const double xhat = (in[idx] - mu[ur]) * inv_std[ur];
            const double gh = g[idx] * gm[static_cast<std::size_t>(j)];
            dx[idx] = static_cast<T>(inv_std[ur] * (gh - s1 / dd - xhat * s2 / dd));
          }
        }
        if (gx.defined()) x.accumulate_grad(gx);
        if (gamma.requires_grad()) gamma.accumulate_grad(Tensor::from(gamma.shape(), ggamma, gamma.dtype()));
        if (beta.requires_grad()) beta.accumulate_grad(Tensor::from(beta.shape(), gbeta, beta.dtype()));
      });
    });
  }
  return out;
}

}  // namespace kdepth
