// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kdepth/model/encoder.hpp"

namespace kdepth::model {

/// Top-down fusion decoder. Starting from F_4, each level applies a 1x1
/// reduction, x2 nearest upsampling, concatenation with the next skip and a
/// 3x3 conv + ReLU. Output: [N x D_f x H/4 x W/4].
struct Decoder {
  std::array<nn::Conv2d, 3> reduce;
  std::array<nn::Conv2d, 3> fuse;

  Decoder() = default;
  Decoder(const Widths& encoder_widths, std::int64_t features, Rng& rng);

  std::int64_t features() const { return fuse[0].out_channels(); }
  /// Skip channel counts this decoder expects, F_1..F_4.
  Widths expected_widths() const;
  Tensor forward(const Pyramid& p) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

struct BinPrediction {
  Tensor widths;   // [N x Nb], positive, rows sum to 1
  Tensor centers;  // [N x Nb], strictly increasing inside (d_min, d_max)
  Tensor probs;    // [N x Nb x h x w], softmax over bins
  Tensor depth;    // [N x 1 x 4h x 4w]
};

/// w_i = (relu(l_i) + eps) / sum_j (relu(l_j) + eps)
/// c_i = d_min + (d_max - d_min) * (w_i / 2 + sum_{j<i} w_j)
/// logits: [N x Nb] or [Nb]. Returns {widths, centers} of the same shape.
std::pair<Tensor, Tensor> bins_from_logits(const Tensor& logits, double d_min, double d_max, double eps = 1e-3);

/// d(h, w) = sum_i P[i, h, w] * c_i, then nearest upsampling by `upsample`.
/// probs: [N x Nb x h x w], centers: [N x Nb].
Tensor depth_from_bins(const Tensor& probs, const Tensor& centers, int upsample = 4);

struct BinHeadsConfig {
  int bins = 16;
  double d_min = 0.25;
  double d_max = 10.0;
  double eps = 1e-3;
};

/// Bin-center head (global pooling + 2-layer MLP -> logits) and bin-probability
/// head (1x1 conv + softmax over bins).
struct BinHeads {
  nn::Linear center_fc1, center_fc2;
  nn::Conv2d prob;
  BinHeadsConfig config;

  BinHeads() = default;
  BinHeads(std::int64_t features, const BinHeadsConfig& config, Rng& rng);

  BinPrediction forward(const Tensor& features) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

/// Decoder plus heads: everything after the encoder. The ghost decoder is a
/// second instance of this type.
struct DepthDecoder {
  Decoder decoder;
  BinHeads heads;

  DepthDecoder() = default;
  DepthDecoder(const Widths& encoder_widths, std::int64_t features, const BinHeadsConfig& config, Rng& rng);

  BinPrediction forward(const Pyramid& p) const { return heads.forward(decoder.forward(p)); }
  void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

}  // namespace kdepth::model
