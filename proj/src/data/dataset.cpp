// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "kdepth/data/dataset.hpp"
#include "kdepth/errors.hpp"
#include "kdepth/tensor/dtns.hpp"
#include "kdepth/tensor/ops.hpp"
#include "kdepth/tensor/tape.hpp"

namespace kdepth::data {
namespace fs = std::filesystem;
namespace {

std::string stem(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(index));
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

nlohmann::ordered_json manifest_json(const SceneSpec& spec, std::int64_t count, std::int64_t first_index) {
  nlohmann::ordered_json j;
  j["format"] = "kdepth-dataset";
  j["version"] = kManifestVersion;
  j["spec"] = nlohmann::ordered_json::parse(spec.to_json());
  j["first_index"] = first_index;
  j["count"] = count;
  return j;
}

struct Manifest {
  SceneSpec spec;
  std::int64_t first_index = 0;
  std::int64_t count = 0;
};

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw FormatError("missing " + path.string());
  try {
    const auto j = nlohmann::json::parse(read_text(path));
    if (j.at("format").get<std::string>() != "kdepth-dataset") throw FormatError(path.string() + ": not a dataset");
    const int version = j.at("version").get<int>();
    if (version != kManifestVersion) {
      throw FormatError(path.string() + ": unsupported manifest version " + std::to_string(version));
    }
    Manifest m;
    m.spec = SceneSpec::from_json(j.at("spec").dump());
    m.first_index = j.at("first_index").get<std::int64_t>();
    m.count = j.at("count").get<std::int64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void check_sample(const DepthSample& s, const SceneSpec& spec, const std::string& name) {
  if (s.image.shape() != Shape{3, spec.height, spec.width} || s.depth.shape() != Shape{1, spec.height, spec.width}) {
    throw FormatError(name + ": tensor shape does not match the manifest");
  }
}

DepthSample load_sample(const fs::path& dir, std::int64_t index, const SceneSpec& spec) {
  DepthSample s;
  s.image = load_dtns(dir / "imgs" / (stem(index) + ".dtns"));
  s.depth = load_dtns(dir / "depth" / (stem(index) + ".dtns"));
  check_sample(s, spec, (dir / stem(index)).string());
  std::vector<double> m = s.depth.to_vector();
  for (double& v : m) v = v > 0 ? 1.0 : 0.0;
  s.mask = Tensor::from(s.depth.shape(), m, s.depth.dtype());
  return s;
}

}  // namespace

void write_dataset(const SceneSpec& spec, std::int64_t count, const fs::path& dir, std::int64_t first_index) {
  spec.validate();
  if (count < 0 || first_index < 0) throw ConfigError("dataset count and first index must be non-negative");
  const fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    const Manifest m = read_manifest(dir);
    if (!(m.spec == spec) || m.first_index != first_index || m.count != count) {
      throw ConfigError("manifest mismatch in " + dir.string() + ": on disk " + m.spec.to_json() + " first_index=" +
                        std::to_string(m.first_index) + " count=" + std::to_string(m.count) + ", requested " +
                        spec.to_json() + " first_index=" + std::to_string(first_index) +
                        " count=" + std::to_string(count));
    }
  }
  fs::create_directories(dir / "imgs");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "meta");
  {
    std::ofstream out(manifest);
    out << manifest_json(spec, count, first_index).dump(2) << '\n';
    if (!out) throw FormatError("cannot write " + manifest.string());
  }
  for (std::int64_t i = first_index; i < first_index + count; ++i) {
    const fs::path img = dir / "imgs" / (stem(i) + ".dtns");
    const fs::path dep = dir / "depth" / (stem(i) + ".dtns");
    const fs::path meta = dir / "meta" / (stem(i) + ".json");
    if (fs::exists(img) && fs::exists(dep) && fs::exists(meta)) {
      try {
        load_sample(dir, i, spec);
        continue;
      } catch (const FormatError&) {
        // regenerate below
      }
    }
    const DepthSample s = generate_scene(spec, i);
    save_dtns(img, s.image);
    save_dtns(dep, s.depth);
    const auto d = s.depth.to_vector();
    nlohmann::ordered_json j;
    j["index"] = i;
    j["depth_min"] = *std::min_element(d.begin(), d.end());
    j["depth_max"] = *std::max_element(d.begin(), d.end());
    std::ofstream out(meta);
    out << j.dump() << '\n';
  }
}

Dataset load_dataset(const fs::path& dir) {
  const Manifest m = read_manifest(dir);
  if (m.spec.height <= 0 || m.spec.width <= 0 || m.spec.height % 32 != 0 || m.spec.width % 32 != 0) {
    throw ShapeError(dir.string() + ": image size " + std::to_string(m.spec.height) + "x" +
                     std::to_string(m.spec.width) + " is not a multiple of 32");
  }
  m.spec.validate();
  Dataset ds;
  ds.spec = m.spec;
  ds.first_index = m.first_index;
  ds.samples.reserve(static_cast<std::size_t>(m.count));
  for (std::int64_t i = m.first_index; i < m.first_index + m.count; ++i) {
    ds.samples.push_back(load_sample(dir, i, m.spec));
  }
  return ds;
}

Dataset generate_dataset(const SceneSpec& spec, std::int64_t count, std::int64_t first_index) {
  Dataset ds;
  ds.spec = spec;
  ds.first_index = first_index;
  for (std::int64_t i = first_index; i < first_index + count; ++i) ds.samples.push_back(generate_scene(spec, i));
  return ds;
}

std::vector<std::int64_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::int64_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::int64_t>(i);
  Rng rng = Rng(seed).split(static_cast<std::uint64_t>(epoch)).split(0);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

BatchIterator::BatchIterator(const Dataset& dataset, std::int64_t batch_size, std::uint64_t seed, std::int64_t epoch,
                             bool shuffle, bool flip)
    : dataset_(&dataset), batch_size_(batch_size) {
  if (dataset.samples.empty()) throw ConfigError("batch iterator over an empty dataset");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (shuffle) {
    order_ = epoch_order(dataset.size(), seed, epoch);
  } else {
    for (std::size_t i = 0; i < dataset.size(); ++i) order_.push_back(static_cast<std::int64_t>(i));
  }
  Rng flip_rng = Rng(seed).split(static_cast<std::uint64_t>(epoch)).split(1);
  flips_.resize(order_.size(), false);
  if (flip) {
    for (std::size_t i = 0; i < order_.size(); ++i) flips_[i] = flip_rng.uniform() < 0.5;
  }
}

std::size_t BatchIterator::num_batches() const {
  const auto b = static_cast<std::size_t>(batch_size_);
  return (order_.size() + b - 1) / b;
}

Batch BatchIterator::next() {
  if (done()) throw ProtocolError("batch iterator exhausted");
  NoGradScope no_grad;
  const std::size_t end = std::min(order_.size(), next_ + static_cast<std::size_t>(batch_size_));
  std::vector<Tensor> imgs, deps, masks;
  Batch b;
  for (std::size_t k = next_; k < end; ++k) {
    const DepthSample& s = dataset_->samples[static_cast<std::size_t>(order_[k])];
    auto add = [&](std::vector<Tensor>& dst, const Tensor& t) {
      const Tensor t4 = reshape(t, {1, t.dim(0), t.dim(1), t.dim(2)});
      dst.push_back(flips_[k] ? flip_width(t4) : t4);
    };
    add(imgs, s.image);
    add(deps, s.depth);
    add(masks, s.mask);
    b.indices.push_back(order_[k]);
    b.flipped.push_back(flips_[k]);
  }
  next_ = end;
  b.images = concat(std::span<const Tensor>(imgs), 0);
  b.depth = concat(std::span<const Tensor>(deps), 0);
  b.mask = concat(std::span<const Tensor>(masks), 0);
  return b;
}

}  // namespace kdepth::data
