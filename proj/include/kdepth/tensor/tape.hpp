// SPDX-License-Identifier: Apache-2.0
//
// Gradient tape. Ops executed while a tape is active (see TapeScope) and
// touching at least one tensor with requires_grad append a node holding the
// inputs, the output and a backward closure. Nodes are appended in execution
// order, so reverse iteration is a valid reverse topological order.

#pragma once

#include <functional>
#include <vector>

#include "kdepth/tensor/tensor.hpp"

namespace kdepth {

class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// The tape ops currently record onto, or nullptr.
  static Tape* active();

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn);

  /// Seeds d(root)/d(root) = 1 and runs every reachable node exactly once in
  /// reverse order. Leaf gradients accumulate; intermediate gradients from a
  /// previous call are cleared first.
  void backward(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
};

/// Makes `tape` the active tape for the current thread until destruction.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording (no tape active) until destruction.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

namespace detail {

/// True when a tape is active and any input requires grad.
bool should_record(std::initializer_list<const Tensor*> inputs);

}  // namespace detail

}  // namespace kdepth
