// SPDX-License-Identifier: Apache-2.0
//
// Synthetic RGB-D scenes and their on-disk form.
//
// A scene is a sloped background plane (far at the top, near at the bottom)
// plus a few fronto-parallel rectangles and ellipses drawn far to near. Color
// is albedo (with a depth-dependent sinusoidal texture on objects) blended
// into a fog color by exp(-k * (d - d_min)), plus Gaussian noise. Fog and
// apparent size/texture frequency all carry depth, so depth is recoverable.
//
// Directory layout:
//   manifest.json       spec, first index, count, schema version
//   imgs/IDX.dtns       [3 x H x W] f32 in [0, 1]
//   depth/IDX.dtns      [1 x H x W] f32 meters
//   meta/IDX.json       per-sample sidecar (index, depth range)
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kdepth/tensor/rng.hpp"
#include "kdepth/tensor/tensor.hpp"

namespace kdepth::data {

inline constexpr int kManifestVersion = 1;

struct SceneSpec {
  std::uint64_t seed = 0;
  std::int64_t height = 96;
  std::int64_t width = 96;
  int min_objects = 2;
  int max_objects = 6;
  double d_min = 0.25;
  double d_max = 10.0;
  double noise_sigma = 0.02;

  /// ConfigError on non-positive or indivisible-by-32 sizes, bad object counts
  /// or an empty depth range.
  void validate() const;
  std::string to_json() const;
  static SceneSpec from_json(const std::string& text);
  bool operator==(const SceneSpec&) const = default;
};

struct DepthSample {
  Tensor image;  // [3 x H x W]
  Tensor depth;  // [1 x H x W]
  Tensor mask;   // [1 x H x W], 1 where depth > 0
};

/// Pure function of (spec, index); f32 tensors.
DepthSample generate_scene(const SceneSpec& spec, std::int64_t index);

struct Dataset {
  SceneSpec spec;
  std::int64_t first_index = 0;
  std::vector<DepthSample> samples;

  std::size_t size() const { return samples.size(); }
};

/// Writes samples first_index .. first_index + count - 1 under `dir`. An existing
/// manifest must describe the same spec and range (ConfigError otherwise);
/// samples already on disk are then kept, missing ones are generated.
void write_dataset(const SceneSpec& spec, std::int64_t count, const std::filesystem::path& dir,
                   std::int64_t first_index = 0);

/// Loads in index order. FormatError (naming the file) on corrupt or missing
/// files, ShapeError when H or W is not a multiple of 32.
Dataset load_dataset(const std::filesystem::path& dir);

/// In-memory equivalent of write_dataset followed by load_dataset.
Dataset generate_dataset(const SceneSpec& spec, std::int64_t count, std::int64_t first_index = 0);

struct Batch {
  Tensor images;  // [B x 3 x H x W]
  Tensor depth;   // [B x 1 x H x W]
  Tensor mask;    // [B x 1 x H x W]
  std::vector<std::int64_t> indices;  // positions in the dataset
  std::vector<bool> flipped;
};

/// Permutation of 0..n-1 for `epoch`, a pure function of (seed, epoch).
std::vector<std::int64_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch);

/// Seeded per-epoch shuffle; the last partial batch is kept. With `flip`,
/// each sample is mirrored horizontally with probability 1/2.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, std::int64_t batch_size, std::uint64_t seed, std::int64_t epoch,
                bool shuffle = true, bool flip = true);

  std::size_t num_batches() const;
  bool done() const { return next_ >= order_.size(); }
  Batch next();

 private:
  const Dataset* dataset_;
  std::int64_t batch_size_;
  std::vector<std::int64_t> order_;
  std::vector<bool> flips_;
  std::size_t next_ = 0;
};

}  // namespace kdepth::data
