// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kdepth/loss/losses.hpp"
#include "kdepth/model/depth_net.hpp"

namespace kdepth::train {

struct AblationFlags {
  bool lg = true;   // wrap the student's 3x3 encoder convs in LgConv
  bool kd = true;   // distill from the teacher
  bool fam = true;  // acclimate teacher features (FAM + adapters + ghost decoder); off: plain feature KD
  bool lam = true;  // weight the KD loss with LAM scores (needs fam)

  /// Row label in the ablation table: "baseline", "+LG", "+LG+KD", "+LG+KD+FAM", "full", ...
  std::string label() const;
  bool operator==(const AblationFlags&) const = default;
};

struct TrainConfig {
  std::string data;          // directory holding train/ and val/
  std::string out;           // checkpoint written at the end (teacher: best validation epoch)
  std::string teacher_ckpt;  // required when flags.kd
  std::uint64_t seed = 0;

  std::int64_t epochs = 25;
  std::int64_t warmup_epochs = 7;
  std::int64_t teacher_epochs = 25;
  std::int64_t batch = 8;
  double lr_start = 4e-5;
  double lr_end = 4e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-2;
  bool flip = true;

  loss::LossConfig loss;
  AblationFlags flags;
  model::DepthNetConfig student;
  model::DepthNetConfig teacher = default_teacher();
  model::AcclimationOptions acclimation;

  std::vector<std::uint64_t> ablation_seeds{0, 1, 2};
  std::string ablation_out;  // JSON table; the summary goes next to it as .txt

  static model::DepthNetConfig default_teacher() {
    model::DepthNetConfig c;
    c.encoder = "transformer";
    c.widths = {32, 64, 128, 256};
    return c;
  }

  /// ConfigError unless warmup_epochs < epochs, lr_end <= lr_start, batch >= 1, ...
  void validate() const;
  /// Student architecture with the lg flag applied.
  model::DepthNetConfig student_model() const;

  std::string to_json() const;
  /// Missing keys keep their defaults; unknown keys are a ConfigError.
  static TrainConfig from_json(const std::string& text);
  static TrainConfig load(const std::string& path);
};

}  // namespace kdepth::train
