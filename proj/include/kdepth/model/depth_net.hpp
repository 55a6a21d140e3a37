// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "kdepth/model/decoder.hpp"
#include "kdepth/nn/lam.hpp"

namespace kdepth::model {

struct DepthNetConfig {
  std::string encoder = "cnn";  // "cnn" or "transformer"
  Widths widths{16, 32, 64, 128};
  int blocks_per_stage = 2;  // transformer encoder only
  int heads = 4;             // transformer encoder only
  bool lg = false;           // wrap every 3x3 encoder conv in an LgConv
  nn::LgConvOptions lg_options;
  std::int64_t features = 64;
  BinHeadsConfig bins;

  /// Architecture string stored in checkpoints and compared on load.
  std::string fingerprint() const;
};

/// Encoder + decoder + bin heads. Parameters are reported as "enc.*" and "dec.*".
struct DepthNet {
  DepthNetConfig config;
  Encoder encoder;
  DepthDecoder decoder;

  struct Output {
    Pyramid features;
    BinPrediction pred;
  };

  DepthNet() = default;
  /// Builds the encoder from rng.split(1) and the decoder from rng.split(2);
  /// with config.lg the fresh encoder is then wrapped using rng.split(3).
  DepthNet(const DepthNetConfig& config, const Rng& rng);

  Widths widths() const;
  Pyramid encode(const Tensor& x, bool train) const;
  Output forward(const Tensor& x, bool train) const;
  void for_each_conv_block(const std::function<void(nn::ConvBnRelu&)>& f);
  void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

struct AcclimationOptions {
  bool fam = true;
  bool lam = true;
  int heads = 4;
  int mlp_ratio = 2;
};

/// Teacher-side modules trained during distillation: per stage a FAM
/// (transformer block, identity at init), a 1x1 adapter to the student's
/// channel width and a LAM; plus the ghost decoder, a frozen copy of the
/// student's DepthDecoder refreshed every iteration.
///
/// Stage l: F_l -> FAM -> adapter -> LAM -> (weighted feature, A_l). The
/// weighted features feed the ghost decoder; the unweighted adapted features
/// are the distillation targets, with A_l weighting the loss.
/// Without FAM the stage skips the transformer block; without LAM, A_l = 1.
struct AcclimatedTeacher {
  AcclimationOptions options;
  std::array<nn::TransformerBlock, 4> fam;
  std::array<nn::Conv2d, 4> adapters;
  std::array<nn::Lam, 4> lam;
  DepthDecoder ghost;
  std::int64_t synced_iteration = -1;

  struct Output {
    Pyramid adapted;               // FAM -> adapter output, student widths
    Pyramid target;                // LAM-weighted adapted features, fed to the ghost decoder
    std::array<Tensor, 4> scores;  // A_l, [N x 1 x H_l x W_l]
    BinPrediction pred;            // ghost decoder prediction
  };

  AcclimatedTeacher() = default;
  AcclimatedTeacher(const Widths& teacher_widths, const DepthNetConfig& student, const AcclimationOptions& options,
                    Rng& rng);

  /// Copies the student's decoder and heads into the ghost and records the iteration.
  void sync_ghost(DepthDecoder& student, std::int64_t iteration);
  /// Throws ProtocolError unless sync_ghost(_, iteration) ran for this iteration.
  Output forward(const Pyramid& teacher_features, std::int64_t iteration) const;
  /// Same computation without the protocol check, for evaluation.
  Output forward_unchecked(const Pyramid& teacher_features) const;
  /// Reports "fam*", "adapter*", "lam*" and "ghost.*".
  void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

}  // namespace kdepth::model
