// SPDX-License-Identifier: Apache-2.0
#include "kdepth/tensor/tape.hpp"

namespace kdepth {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  output.set_requires_grad(true);
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& root) {
  if (root.numel() != 1) throw ShapeError("backward() needs a scalar root, got " + to_string(root.shape()));
  for (auto& node : nodes_) node.output.zero_grad();
  Tensor seed = Tensor::ones(root.shape(), root.dtype());
  Tensor r = root;
  r.accumulate_grad(seed);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->fn();
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace detail

}  // namespace kdepth
