// SPDX-License-Identifier: Apache-2.0
#include "kdepth/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace kdepth {

namespace {

thread_local DType g_default_dtype = DType::f32;

std::shared_ptr<TensorImpl> make_impl(Shape shape, DType dtype) {
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  const auto n = static_cast<std::size_t>(numel(shape));
  impl->shape = std::move(shape);
  if (dtype == DType::f32) {
    impl->storage = std::vector<float>(n, 0.0f);
  } else {
    impl->storage = std::vector<double>(n, 0.0);
  }
  return impl;
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

DType default_dtype() { return g_default_dtype; }
void set_default_dtype(DType dtype) { g_default_dtype = dtype; }

DefaultDTypeGuard::DefaultDTypeGuard(DType dtype) : previous_(g_default_dtype) { g_default_dtype = dtype; }
DefaultDTypeGuard::~DefaultDTypeGuard() { g_default_dtype = previous_; }

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(make_impl(std::move(shape), dtype)); }

Tensor Tensor::ones(Shape shape, DType dtype) { return full(std::move(shape), 1.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::from(Shape shape, std::span<const double> values, DType dtype) {
  if (static_cast<std::int64_t>(values.size()) != kdepth::numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + to_string(shape));
  }
  Tensor t = zeros(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, DType dtype) {
  return from(std::move(shape), std::span<const double>(values.begin(), values.size()), dtype);
}

Tensor Tensor::from_f32(Shape shape, std::vector<float> values) {
  if (static_cast<std::int64_t>(values.size()) != kdepth::numel(shape)) {
    throw ShapeError("value count does not match shape " + to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_f64(Shape shape, std::vector<double> values) {
  if (static_cast<std::int64_t>(values.size()) != kdepth::numel(shape)) {
    throw ShapeError("value count does not match shape " + to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = std::move(values);
  return Tensor(std::move(impl));
}

TensorImpl& Tensor::impl() const {
  if (!impl_) throw ShapeError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

std::int64_t Tensor::numel() const { return kdepth::numel(shape()); }

DType Tensor::dtype() const { return impl().dtype(); }

double Tensor::at(std::int64_t i) const {
  return dispatch(dtype(), [&](auto tag) -> double {
    using T = decltype(tag);
    return static_cast<double>(data<T>()[static_cast<std::size_t>(i)]);
  });
}

void Tensor::set(std::int64_t i, double value) {
  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    data<T>()[static_cast<std::size_t>(i)] = static_cast<T>(value);
  });
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<std::size_t>(numel()));
  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = data<T>();
    std::copy(d.begin(), d.end(), out.begin());
  });
  return out;
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  impl().requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return impl().grad != nullptr; }

Tensor Tensor::grad() const { return impl().grad ? Tensor(impl().grad) : Tensor(); }

void Tensor::zero_grad() const { impl().grad.reset(); }

void Tensor::accumulate_grad(const Tensor& g) const {
  auto& self = impl();
  if (g.shape() != self.shape) {
    throw ShapeError("gradient shape " + to_string(g.shape()) + " does not match tensor shape " + to_string(self.shape));
  }
  if (!self.grad) {
    self.grad = make_impl(self.shape, self.dtype());
  }
  Tensor acc(self.grad);
  dispatch(self.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto dst = acc.data<T>();
    auto src = g.data<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape();
  impl->storage = this->impl().storage;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl().requires_grad = requires_grad();
  return t;
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return detach();
  Tensor t = zeros(shape(), target);
  t.copy_data_from(*this);
  return t;
}

void Tensor::copy_data_from(const Tensor& source) {
  if (source.shape() != shape()) {
    throw ShapeError("copy_data_from: shape " + to_string(source.shape()) + " into " + to_string(shape()));
  }
  dispatch(dtype(), [&](auto dst_tag) {
    using D = decltype(dst_tag);
    auto dst = data<D>();
    dispatch(source.dtype(), [&](auto src_tag) {
      using S = decltype(src_tag);
      auto src = source.data<S>();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<D>(src[i]);
    });
  });
}

std::uint64_t checksum(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (auto d : t.shape()) mix(&d, sizeof d);
  const auto code = static_cast<std::uint8_t>(t.dtype());
  mix(&code, 1);
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    mix(d.data(), d.size() * sizeof(T));
  });
  return h;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
  return dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    return std::memcmp(x.data(), y.data(), x.size() * sizeof(T)) == 0;
  });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

}  // namespace kdepth
