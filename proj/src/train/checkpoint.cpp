// SPDX-License-Identifier: Apache-2.0
#include "kdepth/train/checkpoint.hpp"

#include <fstream>

#include "kdepth/tensor/dtns.hpp"

namespace kdepth::train {

const Tensor& Checkpoint::at(const std::string& name, const Tensor& like) const {
  const auto it = entries.find(name);
  if (it == entries.end()) throw FormatError("checkpoint has no entry " + name);
  if (it->second.shape() != like.shape() || it->second.dtype() != like.dtype()) {
    throw FormatError("checkpoint entry " + name + " is " + to_string(it->second.shape()) + ", expected " +
                      to_string(like.shape()));
  }
  return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write " + tmp.string());
    os.write("DDCK", 4);
    io::put_u32(os, kCheckpointVersion);
    io::put_string(os, ckpt.fingerprint);
    io::put_string(os, ckpt.meta);
    io::put_u64(os, ckpt.entries.size());
    for (const auto& [name, t] : ckpt.entries) {
      io::put_string(os, name);
      write_dtns(os, t);
    }
    if (!os) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  const std::string src = path.string();
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "DDCK") throw FormatError(src + ": not a checkpoint (bad magic)");
  const std::uint32_t version = io::get_u32(is, src);
  if (version != kCheckpointVersion) {
    throw FormatError(src + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.fingerprint = io::get_string(is, src);
  ckpt.meta = io::get_string(is, src);
  const std::uint64_t n = io::get_u64(is, src);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = io::get_string(is, src);
    ckpt.entries[name] = read_dtns(is, src + ":" + name);
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_fingerprint) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.fingerprint != expected_fingerprint) {
    throw FormatError(path.string() + ": architecture fingerprint mismatch\n  checkpoint: " + ckpt.fingerprint +
                      "\n  expected:   " + expected_fingerprint);
  }
  return ckpt;
}

}  // namespace kdepth::train
