// SPDX-License-Identifier: Apache-2.0
#include <cstring>

#include "kdepth/nn/module.hpp"

namespace kdepth::nn {

namespace {

bool starts_with(const std::string& s, const std::string& prefix) { return s.compare(0, prefix.size(), prefix) == 0; }

}  // namespace

void ParameterStore::add(const std::string& name, const Tensor& tensor, ParamKind kind) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name " + name);
  entries_.push_back(Entry{name, tensor, kind, false});
}

const ParameterStore::Entry* ParameterStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void ParameterStore::set_frozen(const std::string& prefix, bool frozen) {
  for (auto& e : entries_) {
    if (!starts_with(e.name, prefix)) continue;
    e.frozen = frozen;
    if (e.kind == ParamKind::weight) e.tensor.set_requires_grad(!frozen);
  }
}

std::vector<ParameterStore::Entry*> ParameterStore::trainable() {
  std::vector<Entry*> out;
  for (auto& e : entries_) {
    if (e.kind == ParamKind::weight && !e.frozen) out.push_back(&e);
  }
  return out;
}

std::int64_t ParameterStore::weight_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) {
    if (e.kind == ParamKind::weight) n += e.tensor.numel();
  }
  return n;
}

void ParameterStore::zero_grad() const {
  for (const auto& e : entries_) e.tensor.zero_grad();
}

std::uint64_t ParameterStore::checksum(const std::string& prefix) const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& e : entries_) {
    if (!starts_with(e.name, prefix)) continue;
    for (unsigned char c : e.name) h = (h ^ c) * 1099511628211ull;
    const std::uint64_t t = kdepth::checksum(e.tensor);
    for (int i = 0; i < 8; ++i) h = (h ^ ((t >> (8 * i)) & 0xFF)) * 1099511628211ull;
  }
  return h;
}

}  // namespace kdepth::nn
