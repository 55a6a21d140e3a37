// SPDX-License-Identifier: Apache-2.0
//
// Parameter plumbing shared by all blocks. A block exposes its tensors through
// visit(prefix, visitor), which reports every trainable weight and every
// running buffer under a stable hierarchical name ("enc.stage2.conv1.local.w").

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kdepth/tensor/rng.hpp"
#include "kdepth/tensor/tensor.hpp"

namespace kdepth::nn {

enum class ParamKind : std::uint8_t { weight, buffer };

using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor, ParamKind kind)>;

inline std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// Kaiming-normal tensor for a layer with `fan_in` inputs feeding a ReLU.
Tensor kaiming(Shape shape, std::int64_t fan_in, Rng& rng);
/// N(0, 1/fan_in) tensor for layers not followed by a ReLU.
Tensor lecun(Shape shape, std::int64_t fan_in, Rng& rng);

/// Named, ordered view over the tensors of one or more blocks. Entries alias
/// the block's storage, so optimizer updates through the store are visible in
/// the block. Rebuild the store after structurally changing a block.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    ParamKind kind;
    bool frozen = false;
  };

  template <class Block>
  void collect(Block& block, const std::string& prefix) {
    block.visit(prefix, [this](const std::string& name, Tensor& t, ParamKind kind) { add(name, t, kind); });
  }

  /// Throws ConfigError on a duplicate name.
  void add(const std::string& name, const Tensor& tensor, ParamKind kind);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  const Entry* find(const std::string& name) const;

  /// Marks every entry whose name starts with `prefix` frozen (or unfrozen)
  /// and sets requires_grad accordingly on its weights.
  void set_frozen(const std::string& prefix, bool frozen);

  /// Unfrozen weights in registration order.
  std::vector<Entry*> trainable();
  std::int64_t weight_count() const;
  void zero_grad() const;
  /// Digest over names and bytes of every entry whose name starts with `prefix`.
  std::uint64_t checksum(const std::string& prefix = "") const;

 private:
  std::vector<Entry> entries_;
};

/// Copies every tensor of `src` into the same-named tensor of `dst` in place.
/// Both blocks must have identical structure.
template <class Block>
void copy_parameters(Block& src, Block& dst) {
  std::vector<std::pair<std::string, Tensor>> from;
  src.visit("", [&](const std::string& name, Tensor& t, ParamKind) { from.emplace_back(name, t); });
  std::size_t i = 0;
  dst.visit("", [&](const std::string& name, Tensor& t, ParamKind) {
    if (i >= from.size() || from[i].first != name) throw ShapeError("copy_parameters: structure mismatch at " + name);
    t.copy_data_from(from[i].second);
    ++i;
  });
  if (i != from.size()) throw ShapeError("copy_parameters: structure mismatch (entry count)");
}

/// Digest over the names and data of every tensor a block reports.
template <class Block>
std::uint64_t block_checksum(Block& block) {
  ParameterStore store;
  store.collect(block, "");
  return store.checksum();
}

template <class Block>
std::int64_t block_weight_count(Block& block) {
  ParameterStore store;
  store.collect(block, "");
  return store.weight_count();
}

template <class Block>
void set_requires_grad(Block& block, bool value) {
  block.visit("", [&](const std::string&, Tensor& t, ParamKind kind) {
    if (kind == ParamKind::weight) t.set_requires_grad(value);
  });
}

}  // namespace kdepth::nn
