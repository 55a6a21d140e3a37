// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor with optional participation in reverse-mode autodiff.
//
// A Tensor is a cheap shared handle: copying it aliases the same storage, the
// way parameters are shared between a model and its optimizer. Use clone() for
// a deep copy. Ops never mutate their inputs; the only in-place writers are the
// optimizer, BN running statistics and explicit copy_data_from().

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "kdepth/errors.hpp"

namespace kdepth {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::int64_t>;

std::string to_string(const Shape& shape);
std::string to_string(DType dtype);
std::int64_t numel(const Shape& shape);

/// Element type used by factories when none is given. Gradient checking
/// switches this to f64 for the lifetime of a DefaultDTypeGuard.
DType default_dtype();
void set_default_dtype(DType dtype);

class DefaultDTypeGuard {
 public:
  explicit DefaultDTypeGuard(DType dtype);
  ~DefaultDTypeGuard();
  DefaultDTypeGuard(const DefaultDTypeGuard&) = delete;
  DefaultDTypeGuard& operator=(const DefaultDTypeGuard&) = delete;

 private:
  DType previous_;
};

/// Invokes `f` with a value of the C++ type matching `dtype` (float or double).
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f32) return f(float{});
  return f(double{});
}

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

struct TensorImpl;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = default_dtype());
  static Tensor ones(Shape shape, DType dtype = default_dtype());
  static Tensor full(Shape shape, double value, DType dtype = default_dtype());
  static Tensor scalar(double value, DType dtype = default_dtype());
  /// Values are converted to `dtype`; their count must equal numel(shape).
  static Tensor from(Shape shape, std::span<const double> values, DType dtype = default_dtype());
  static Tensor from(Shape shape, std::initializer_list<double> values, DType dtype = default_dtype());
  static Tensor from_f32(Shape shape, std::vector<float> values);
  static Tensor from_f64(Shape shape, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  /// Size of dimension `axis`; negative axes count from the end.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;
  DType dtype() const;

  template <class T>
  std::span<T> data();
  template <class T>
  std::span<const T> data() const;

  /// Element access converting to double, for tests and diagnostics.
  double at(std::int64_t flat_index) const;
  void set(std::int64_t flat_index, double value);
  /// Value of a single-element tensor.
  double item() const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  /// Gradient buffer; undefined Tensor when none has been accumulated.
  Tensor grad() const;
  void zero_grad() const;
  /// Adds `g` into this tensor's gradient buffer, allocating it on first use.
  void accumulate_grad(const Tensor& g) const;

  /// New leaf tensor holding a copy of the data, detached from any tape.
  Tensor detach() const;
  Tensor clone() const;
  Tensor to(DType dtype) const;
  /// Overwrites the data in place from a same-shaped tensor of any dtype.
  void copy_data_from(const Tensor& source);

  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  TensorImpl& impl() const;

  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>> storage;
  bool requires_grad = false;
  std::shared_ptr<TensorImpl> grad;

  DType dtype() const { return storage.index() == 0 ? DType::f32 : DType::f64; }
};

template <class T>
std::span<T> Tensor::data() {
  auto* v = std::get_if<std::vector<T>>(&impl().storage);
  if (v == nullptr) throw ShapeError("tensor dtype is " + to_string(dtype()) + ", not the requested type");
  return {v->data(), v->size()};
}

template <class T>
std::span<const T> Tensor::data() const {
  const auto* v = std::get_if<std::vector<T>>(&impl().storage);
  if (v == nullptr) throw ShapeError("tensor dtype is " + to_string(dtype()) + ", not the requested type");
  return {v->data(), v->size()};
}

/// Order-sensitive 64-bit FNV-1a digest over shape, dtype and raw bytes.
std::uint64_t checksum(const Tensor& t);

/// True when shapes, dtypes and every data bit agree.
bool bitwise_equal(const Tensor& a, const Tensor& b);

/// max |a - b| over all elements; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace kdepth
