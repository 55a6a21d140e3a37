// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint files:
//
//   bytes 0..3   magic "DDCK"
//   u32          version (= 1)
//   string       architecture fingerprint (u32 length + bytes)
//   string       metadata JSON
//   u64          entry count
//   per entry    string name, then one ".dtns" record
//
// Entries are written in name order, so equal contents give equal bytes.
#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "kdepth/nn/module.hpp"

namespace kdepth::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string fingerprint;
  std::string meta;  // JSON object
  std::map<std::string, Tensor> entries;

  /// Adds every tensor of `block` as "<prefix>.<name>".
  template <class Block>
  void put(Block& block, const std::string& prefix) {
    block.visit(prefix, [&](const std::string& name, Tensor& t, nn::ParamKind) { entries[name] = t; });
  }
  /// Copies "<prefix>.<name>" into every tensor of `block` in place. FormatError
  /// naming the entry when it is missing or has another shape or dtype.
  template <class Block>
  void get(Block& block, const std::string& prefix) const {
    block.visit(prefix, [&](const std::string& name, Tensor& t, nn::ParamKind) { t.copy_data_from(at(name, t)); });
  }

  const Tensor& at(const std::string& name, const Tensor& like) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// FormatError on bad magic, version or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// As load_checkpoint, plus FormatError when the fingerprint differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_fingerprint);

}  // namespace kdepth::train
