// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cmath>
#include <json.hpp>
#include <numbers>

#include "kdepth/data/dataset.hpp"
#include "kdepth/errors.hpp"

namespace kdepth::data {
namespace {

constexpr std::array<double, 3> kFog{0.75, 0.80, 0.85};
constexpr double kFogDensity = 0.25;

struct Object {
  bool ellipse = false;
  double depth = 0, cx = 0, cy = 0, half_w = 0, half_h = 0;
  std::array<double, 3> albedo{};
  double period = 0, angle = 0, phase = 0;

  bool covers(double x, double y) const {
    const double u = (x - cx) / half_w, v = (y - cy) / half_h;
    return ellipse ? u * u + v * v <= 1.0 : std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
  }
  double texture(double x, double y) const {
    const double s = x * std::cos(angle) + y * std::sin(angle);
    return 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * s / period + phase);
  }
};

}  // namespace

void SceneSpec::validate() const {
  if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0) {
    throw ConfigError("scene size " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be positive multiples of 32");
  }
  if (min_objects < 0 || max_objects < min_objects) {
    throw ConfigError("object count range [" + std::to_string(min_objects) + ", " + std::to_string(max_objects) +
                      "] is empty");
  }
  if (!(d_min > 0) || !(d_max > d_min)) throw ConfigError("depth range must satisfy 0 < d_min < d_max");
  if (!(noise_sigma >= 0)) throw ConfigError("noise_sigma must be non-negative");
}

std::string SceneSpec::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["height"] = height;
  j["width"] = width;
  j["min_objects"] = min_objects;
  j["max_objects"] = max_objects;
  j["d_min"] = d_min;
  j["d_max"] = d_max;
  j["noise_sigma"] = noise_sigma;
  return j.dump();
}

SceneSpec SceneSpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SceneSpec s;
  s.seed = j.value("seed", s.seed);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.min_objects = j.value("min_objects", s.min_objects);
  s.max_objects = j.value("max_objects", s.max_objects);
  s.d_min = j.value("d_min", s.d_min);
  s.d_max = j.value("d_max", s.d_max);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  return s;
}

DepthSample generate_scene(const SceneSpec& spec, std::int64_t index) {
  spec.validate();
  if (index < 0) throw ConfigError("scene index must be non-negative");
  const Rng base = Rng(spec.seed).split(static_cast<std::uint64_t>(index));
  Rng layout = base.split(1);
  Rng noise = base.split(2);
  const std::int64_t h = spec.height, w = spec.width, hw = h * w;
  const double clamp_lo = spec.d_min, clamp_hi = spec.d_max;

  // Background plane.
  const double d_top = layout.uniform(7.0, 10.0);
  const double d_bottom = layout.uniform(1.0, 3.0);
  const double tilt = layout.uniform(-0.5, 0.5);
  std::array<double, 3> bg_albedo{};
  for (double& a : bg_albedo) a = layout.uniform(0.05, 0.4);

  std::vector<double> depth(static_cast<std::size_t>(hw));
  std::vector<double> color(static_cast<std::size_t>(3 * hw));
  std::vector<double> tex(static_cast<std::size_t>(hw), 1.0);
  std::vector<std::array<double, 3>> albedo(static_cast<std::size_t>(hw), bg_albedo);
  for (std::int64_t y = 0; y < h; ++y) {
    const double fy = h > 1 ? static_cast<double>(y) / static_cast<double>(h - 1) : 0.0;
    for (std::int64_t x = 0; x < w; ++x) {
      const double fx = w > 1 ? static_cast<double>(x) / static_cast<double>(w - 1) : 0.5;
      const double d = d_top + (d_bottom - d_top) * fy + tilt * (fx - 0.5);
      depth[static_cast<std::size_t>(y * w + x)] = std::clamp(d, clamp_lo, clamp_hi);
    }
  }

  // Objects, painted far to near with a depth test.
  const int count = spec.min_objects + static_cast<int>(layout.below(
                                           static_cast<std::uint64_t>(spec.max_objects - spec.min_objects + 1)));
  const double focal = 0.5 * static_cast<double>(w);
  const double obj_lo = std::max(spec.d_min, 0.5), obj_hi = std::min(spec.d_max, 8.0);
  std::vector<Object> objects(static_cast<std::size_t>(count));
  for (auto& o : objects) {
    o.ellipse = layout.uniform() < 0.5;
    o.depth = obj_hi > obj_lo ? layout.uniform(obj_lo, obj_hi) : obj_lo;
    o.cx = layout.uniform(0.0, static_cast<double>(w));
    o.cy = layout.uniform(0.0, static_cast<double>(h));
    const double extent = layout.uniform(0.15, 0.5);
    const double aspect = std::exp(layout.uniform(std::log(0.5), std::log(2.0)));
    o.half_w = std::max(1.5, focal * extent * std::sqrt(aspect) / o.depth);
    o.half_h = std::max(1.5, focal * extent / std::sqrt(aspect) / o.depth);
    for (double& a : o.albedo) a = layout.uniform(0.1, 0.9);
    o.period = std::max(2.5, 16.0 / o.depth);
    o.angle = layout.uniform(0.0, std::numbers::pi);
    o.phase = layout.uniform(0.0, 2.0 * std::numbers::pi);
  }
  std::stable_sort(objects.begin(), objects.end(), [](const Object& a, const Object& b) { return a.depth > b.depth; });
  for (const auto& o : objects) {
    const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(o.cx - o.half_w)));
    const std::int64_t x1 = std::min<std::int64_t>(w - 1, static_cast<std::int64_t>(std::ceil(o.cx + o.half_w)));
    const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(o.cy - o.half_h)));
    const std::int64_t y1 = std::min<std::int64_t>(h - 1, static_cast<std::int64_t>(std::ceil(o.cy + o.half_h)));
    for (std::int64_t y = y0; y <= y1; ++y) {
      for (std::int64_t x = x0; x <= x1; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        const auto i = static_cast<std::size_t>(y * w + x);
        if (!o.covers(px, py) || o.depth >= depth[i]) continue;
        depth[i] = std::clamp(o.depth, clamp_lo, clamp_hi);
        tex[i] = o.texture(px, py);
        albedo[i] = o.albedo;
      }
    }
  }

  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t i = 0; i < hw; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double atten = std::exp(-kFogDensity * (depth[k] - spec.d_min));
      double v = atten * albedo[k][static_cast<std::size_t>(c)] * (0.6 + 0.4 * tex[k]) +
                 (1.0 - atten) * kFog[static_cast<std::size_t>(c)];
      if (spec.noise_sigma > 0) v += spec.noise_sigma * noise.normal();
      color[static_cast<std::size_t>(c * hw + i)] = std::clamp(v, 0.0, 1.0);
    }
  }

  DepthSample s;
  s.image = Tensor::from({3, h, w}, color, DType::f32);
  s.depth = Tensor::from({1, h, w}, depth, DType::f32);
  std::vector<double> mask(depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) mask[i] = depth[i] > 0 ? 1.0 : 0.0;
  s.mask = Tensor::from({1, h, w}, mask, DType::f32);
  return s;
}

}  // namespace kdepth::data
