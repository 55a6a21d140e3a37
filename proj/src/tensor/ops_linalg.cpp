// SPDX-License-Identifier: Apache-2.0
#include <cblas.h>

#include "op_support.hpp"

extern "C" void openblas_set_num_threads(int num_threads);

namespace kdepth {

using detail::should_record;

namespace kernels {

namespace {
// Sequential BLAS keeps every reduction order fixed from run to run.
const bool g_blas_single_thread = [] {
  openblas_set_num_threads(1);
  return true;
}();
}  // namespace

template <>
void gemm<float>(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
                 float beta, float* c, int ldc) {
  (void)g_blas_single_thread;
  if (m == 0 || n == 0) return;
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

template <>
void gemm<double>(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b,
                  int ldb, double beta, double* c, int ldc) {
  if (m == 0 || n == 0) return;
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace kernels

namespace {
thread_local std::int64_t g_forward_macs = 0;
}

std::int64_t forward_macs() { return g_forward_macs; }
void reset_forward_macs() { g_forward_macs = 0; }

namespace detail {
void count_macs(std::int64_t n) { g_forward_macs += n; }
}  // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_same_dtype(a, b, "matmul");
  const bool batched = a.rank() == 3;
  const bool shared_b = b.rank() == 2;
  if (!((a.rank() == 2 && b.rank() == 2) || (batched && (b.rank() == 3 || shared_b)))) {
    throw ShapeError("matmul: unsupported ranks " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::int64_t batch = batched ? a.dim(0) : 1;
  const int m = static_cast<int>(a.dim(-2));
  const int k = static_cast<int>(a.dim(-1));
  const int n = static_cast<int>(b.dim(-1));
  if (b.dim(-2) != k || (batched && !shared_b && b.dim(0) != batch)) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  detail::count_macs(batch * m * n * k);
  Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  const std::int64_t a_step = static_cast<std::int64_t>(m) * k;
  const std::int64_t b_step = shared_b ? 0 : static_cast<std::int64_t>(k) * n;
  const std::int64_t c_step = static_cast<std::int64_t>(m) * n;

  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.data<T>().data();
    const T* pb = b.data<T>().data();
    T* pc = out.data<T>().data();
    for (std::int64_t i = 0; i < batch; ++i) {
      kernels::gemm<T>(false, false, m, n, k, T{1}, pa + i * a_step, k, pb + i * b_step, n, T{0}, pc + i * c_step, n);
    }
  });

  if (should_record({&a, &b})) {
    detail::record(out, {a, b}, [a, b, out, batch, m, n, k, a_step, b_step, c_step]() mutable {
      dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const Tensor g = out.grad();
        const T* pg = g.data<T>().data();
        if (a.requires_grad()) {
          Tensor ga = Tensor::zeros(a.shape(), a.dtype());
          const T* pb = b.data<T>().data();
          T* pga = ga.data<T>().data();
          for (std::int64_t i = 0; i < batch; ++i) {
            // dA = G B^T
            kernels::gemm<T>(false, true, m, k, n, T{1}, pg + i * c_step, n, pb + i * b_step, n, T{0},
                             pga + i * a_step, k);
          }
          a.accumulate_grad(ga);
        }
        if (b.requires_grad()) {
          Tensor gb = Tensor::zeros(b.shape(), b.dtype());
          const T* pa = a.data<T>().data();
          T* pgb = gb.data<T>().data();
          for (std::int64_t i = 0; i < batch; ++i) {
            // dB = A^T G, summed over the batch when B is shared.
            kernels::gemm<T>(true, false, k, n, m, T{1}, pa + i * a_step, k, pg + i * c_step, n,
                             b_step == 0 ? T{1} : T{0}, pgb + i * b_step, n);
          }
          b.accumulate_grad(gb);
        }
      });
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::check_same_dtype(x, weight, "linear");
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(1)) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " for weight " + to_string(weight.shape()));
  }
  const int in = static_cast<int>(weight.dim(1));
  const int outf = static_cast<int>(weight.dim(0));
  const int rows = static_cast<int>(x.numel() / in);
  detail::count_macs(static_cast<std::int64_t>(rows) * in * outf);
  Shape out_shape = x.shape();
  out_shape.back() = outf;
  Tensor out = Tensor::zeros(out_shape, x.dtype());

  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* po = out.data<T>().data();
    if (bias.defined()) {
      auto pb = bias.data<T>();
      for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < outf; ++j) po[static_cast<std::size_t>(r) * outf + j] = pb[static_cast<std::size_t>(j)];
      }
    }
    kernels::gemm<T>(false, true, rows, outf, in, T{1}, x.data<T>().data(), in, weight.data<T>().data(), in,
                     bias.defined() ? T{1} : T{0}, po, outf);
  });

  if (should_record({&x, &weight, &bias})) {
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    detail::record(out, std::move(inputs), [x, weight, bias, out, rows, in, outf]() mutable {
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const Tensor g = out.grad();
        const T* pg = g.data<T>().data();
        if (x.requires_grad()) {
          Tensor gx = Tensor::zeros(x.shape(), x.dtype());
          kernels::gemm<T>(false, false, rows, in, outf, T{1}, pg, outf, weight.data<T>().data(), in, T{0},
                           gx.data<T>().data(), in);
          x.accumulate_grad(gx);
        }
        if (weight.requires_grad()) {
          Tensor gw = Tensor::zeros(weight.shape(), weight.dtype());
          kernels::gemm<T>(true, false, outf, in, rows, T{1}, pg, outf, x.data<T>().data(), in, T{0},
                           gw.data<T>().data(), in);
          weight.accumulate_grad(gw);
        }
        if (bias.defined() && bias.requires_grad()) {
          Tensor gb = Tensor::zeros(bias.shape(), bias.dtype());
          auto d = gb.data<T>();
          for (int r = 0; r < rows; ++r) {
            for (int j = 0; j < outf; ++j) d[static_cast<std::size_t>(j)] += pg[static_cast<std::size_t>(r) * outf + j];
          }
          bias.accumulate_grad(gb);
        }
      });
    });
  }
  return out;
}

}  // namespace kdepth
