// SPDX-License-Identifier: Apache-2.0
#include "kdepth/model/decoder.hpp"

namespace kdepth::model {

Decoder::Decoder(const Widths& w, std::int64_t features, Rng& rng) {
  // Level i fuses into skip F_{3-i}: i = 0 -> F_3, 1 -> F_2, 2 -> F_1.
  std::int64_t in = w[3];
  for (std::size_t i = 0; i < 3; ++i) {
    reduce[i] = nn::Conv2d(in, features, 1, 1, true, rng);
    fuse[i] = nn::Conv2d(features + w[2 - i], features, 3, 1, true, rng);
    in = features;
  }
}

Widths Decoder::expected_widths() const {
  Widths w{};
  for (std::size_t i = 0; i < 3; ++i) w[2 - i] = fuse[i].in_channels() - reduce[i].out_channels();
  w[3] = reduce[0].in_channels();
  return w;
}

Tensor Decoder::forward(const Pyramid& p) const {
  const Widths want = expected_widths();
  for (std::size_t l = 0; l < 4; ++l) {
    if (p[l].rank() != 4 || p[l].dim(1) != want[l]) {
      throw ShapeError("decoder: stage " + std::to_string(l + 1) + " feature " + to_string(p[l].shape()) +
                       " does not have " + std::to_string(want[l]) + " channels");
    }
  }
  Tensor x = p[3];
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor& skip = p[2 - i];
    x = upsample_nearest(reduce[i].forward(x), 2);
    if (x.dim(2) != skip.dim(2) || x.dim(3) != skip.dim(3)) {
      throw ShapeError("decoder: upsampled " + to_string(x.shape()) + " does not match skip " + to_string(skip.shape()));
    }
    x = relu(fuse[i].forward(concat({x, skip}, 1)));
  }
  return x;
}

void Decoder::visit(const std::string& prefix, const nn::ParamVisitor& v) {
  for (std::size_t i = 0; i < 3; ++i) {
    reduce[i].visit(nn::join(prefix, "reduce" + std::to_string(i + 1)), v);
    fuse[i].visit(nn::join(prefix, "fuse" + std::to_string(i + 1)), v);
  }
}

std::pair<Tensor, Tensor> bins_from_logits(const Tensor& logits, double d_min, double d_max, double eps) {
  const bool single = logits.rank() == 1;
  const Tensor l = single ? reshape(logits, {1, logits.dim(0)}) : logits;
  if (l.rank() != 2 || l.dim(1) < 2) throw ShapeError("bins_from_logits: need [N x Nb] with Nb >= 2, got " + to_string(logits.shape()));
  if (!(d_max > d_min)) throw ConfigError("bins_from_logits: d_max must exceed d_min");
  const std::int64_t nb = l.dim(1);
  const Tensor raw = add_scalar(relu(l), eps);
  const Tensor widths = div(raw, sum(raw, 1, true));
  // Column i of m holds 1 for j < i and 1/2 for j == i.
  std::vector<double> m(static_cast<std::size_t>(nb * nb), 0.0);
  for (std::int64_t j = 0; j < nb; ++j) {
    m[static_cast<std::size_t>(j * nb + j)] = 0.5;
    for (std::int64_t i = j + 1; i < nb; ++i) m[static_cast<std::size_t>(j * nb + i)] = 1.0;
  }
  const Tensor cum = matmul(widths, Tensor::from({nb, nb}, m, l.dtype()));
  const Tensor centers = add_scalar(mul_scalar(cum, d_max - d_min), d_min);
  if (single) return {reshape(widths, {nb}), reshape(centers, {nb})};
  return {widths, centers};
}

Tensor depth_from_bins(const Tensor& probs, const Tensor& centers, int upsample) {
  if (probs.rank() != 4 || centers.rank() != 2 || probs.dim(0) != centers.dim(0) || probs.dim(1) != centers.dim(1)) {
    throw ShapeError("depth_from_bins: probabilities " + to_string(probs.shape()) + " vs centers " +
                     to_string(centers.shape()));
  }
  const std::int64_t n = probs.dim(0), nb = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  const Tensor d = matmul(reshape(centers, {n, 1, nb}), reshape(probs, {n, nb, h * w}));
  const Tensor map = reshape(d, {n, 1, h, w});
  return upsample > 1 ? upsample_nearest(map, upsample) : map;
}

BinHeads::BinHeads(std::int64_t features, const BinHeadsConfig& cfg, Rng& rng) : config(cfg) {
  center_fc1 = nn::Linear(features, features, true, rng, true);
  center_fc2 = nn::Linear(features, cfg.bins, true, rng);
  prob = nn::Conv2d(features, cfg.bins, 1, 1, true, rng);
}

BinPrediction BinHeads::forward(const Tensor& features) const {
  const std::int64_t n = features.dim(0), c = features.dim(1);
  const Tensor pooled = reshape(avgpool_global(features), {n, c});
  const Tensor logits = center_fc2.forward(relu(center_fc1.forward(pooled)));
  BinPrediction out;
  std::tie(out.widths, out.centers) = bins_from_logits(logits, config.d_min, config.d_max, config.eps);
  out.probs = softmax(prob.forward(features), 1);
  out.depth = depth_from_bins(out.probs, out.centers, 4);
  return out;
}

void BinHeads::visit(const std::string& prefix, const nn::ParamVisitor& v) {
  center_fc1.visit(nn::join(prefix, "center_fc1"), v);
  center_fc2.visit(nn::join(prefix, "center_fc2"), v);
  prob.visit(nn::join(prefix, "prob"), v);
}

DepthDecoder::DepthDecoder(const Widths& w, std::int64_t features, const BinHeadsConfig& config, Rng& rng)
    : decoder(w, features, rng), heads(features, config, rng) {}

void DepthDecoder::visit(const std::string& prefix, const nn::ParamVisitor& v) {
  decoder.visit(prefix, v);
  heads.visit(nn::join(prefix, "heads"), v);
}

}  // namespace kdepth::model
