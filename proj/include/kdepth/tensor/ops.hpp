// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor ops. Every op returns a fresh tensor and, when a tape
// is active and an input requires grad, records its backward closure.
// Binary elementwise ops broadcast numpy-style (right-aligned, size-1 dims
// stretch). Image-like tensors are N x C x H x W; single images may be passed
// as C x H x W wherever noted.

#pragma once

#include <span>
#include <vector>

#include "kdepth/tensor/tensor.hpp"

namespace kdepth {

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// tanh approximation of GELU.
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
/// Throws DomainError if any element is <= 0.
Tensor log(const Tensor& x);
/// Throws DomainError if any element is < 0.
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
/// max(x, lo); the gradient passes where x > lo.
Tensor clamp_min(const Tensor& x, double lo);

// --- reductions --------------------------------------------------------------

/// Sum of all elements; rank-0 result.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum of squares of all elements.
Tensor sum_sq(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim);
Tensor mean(const Tensor& x, int axis, bool keepdim);
/// Numerically stable softmax along `axis` (max subtracted before exp).
Tensor softmax(const Tensor& x, int axis);

// --- linear algebra ----------------------------------------------------------

/// [m x k] . [k x n], or batched [B x m x k] . [B x k n] / [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// y = x W^T + b over the last axis of x. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// --- convolution, pooling, resampling ---------------------------------------

/// x: [N x Cin x H x W] or [Cin x H x W]; weight: [Cout x Cin x k x k] with k odd;
/// bias: [Cout] or undefined. Output spatial size floor((H + 2p - k)/s) + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);
/// Per-channel mean over the two trailing (spatial) axes, kept as size 1.
Tensor avgpool_global(const Tensor& x);
/// Nearest-neighbour resize of the two trailing axes.
Tensor resize_nearest(const Tensor& x, std::int64_t height, std::int64_t width);
/// Block replication by an integer factor on the two trailing axes.
Tensor upsample_nearest(const Tensor& x, int factor = 2);

// --- shape --------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::vector<int> order);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t begin, std::int64_t end);
/// Flips the trailing (width) axis.
Tensor flip_width(const Tensor& x);

// --- normalization -----------------------------------------------------------

/// Batch normalization over axis 1 of an [N x C x ...] tensor. In training
/// mode batch statistics are used and the running buffers are updated in place
/// (running = (1 - momentum) * running + momentum * batch, unbiased variance).
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor running_mean, Tensor running_var,
                  bool training, double momentum, double eps);
/// Layer normalization over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// --- cost accounting ----------------------------------------------------------

/// Multiply-accumulates performed by the forward passes of matmul, linear and
/// conv2d on this thread since the last reset.
std::int64_t forward_macs();
void reset_forward_macs();

// --- kernels without autodiff, shared with the ops ----------------------------

namespace kernels {

/// Row-major GEMM: C = alpha * op(A) op(B) + beta * C.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b, int ldb, T beta,
          T* c, int ldc);

}  // namespace kernels

}  // namespace kdepth
