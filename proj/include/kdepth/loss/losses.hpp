// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>

#include "kdepth/tensor/tensor.hpp"

namespace kdepth::loss {

struct LossConfig {
  double alpha = 10.0;      // SILog scale
  double beta = 0.85;       // SILog variance-focus coefficient
  double lambda_kd = 0.05;  // distillation weight
  double depth_eps = 1e-3;  // predictions are clamped to at least this before the log

  /// Throws ConfigError unless alpha > 0, 0 <= beta <= 1, lambda_kd >= 0, depth_eps > 0.
  void validate() const;
};

/// alpha * sqrt(mean(g^2) - beta * mean(g)^2), g = log(max(pred, eps)) - log(gt)
/// over pixels where mask != 0. pred, gt, mask share a shape.
/// Throws DomainError on an empty mask or a non-positive gt inside the mask.
/// At a zero radicand the value is 0 with zero gradient.
Tensor silog(const Tensor& pred, const Tensor& gt, const Tensor& mask, const LossConfig& config = {});

/// sum_l ||A_l * (F_s,l - F_t,l)||^2 / sum_l numel(F_s,l). A_l broadcasts over
/// channels. The teacher side is used as given; pass detached tensors to keep
/// gradients off the teacher.
template <std::size_t L>
Tensor attentive_kd(const std::array<Tensor, L>& student, const std::array<Tensor, L>& teacher,
                    const std::array<Tensor, L>& attention);

Tensor attentive_kd(std::span<const Tensor> student, std::span<const Tensor> teacher,
                    std::span<const Tensor> attention);

template <std::size_t L>
Tensor attentive_kd(const std::array<Tensor, L>& student, const std::array<Tensor, L>& teacher,
                    const std::array<Tensor, L>& attention) {
  return attentive_kd(std::span<const Tensor>(student), std::span<const Tensor>(teacher),
                      std::span<const Tensor>(attention));
}

struct Objectives {
  Tensor student;      // drives student parameters (and KD connectors)
  Tensor acclimation;  // drives FAM, adapter and LAM parameters; undefined without a teacher branch
  Tensor student_task;
  Tensor teacher_task;
  double kd_value = 0.0;  // logged even while gated
};

/// student = SILog(student) + (warmup ? 0 : lambda * kd); acclimation = SILog(teacher via ghost).
/// `kd` and `teacher_pred` may be undefined. During warmup the KD term is not
/// part of the student graph at all, so its gradient is the no-KD gradient bitwise.
Objectives total_loss(const Tensor& student_pred, const Tensor& teacher_pred, const Tensor& gt, const Tensor& mask,
                      const Tensor& kd, bool warmup_active, const LossConfig& config);

struct MetricReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double log10 = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::int64_t n_valid = 0;

  /// Flat JSON object with the seven metrics and n_valid, fixed key order.
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

/// Pools pixels across calls in double precision; report() finalizes.
class MetricAccumulator {
 public:
  void add(const Tensor& pred, const Tensor& gt, const Tensor& mask);
  /// Throws DomainError when no valid pixel was added.
  MetricReport report() const;

 private:
  double abs_rel_ = 0, sq_rel_ = 0, sq_ = 0, log10_ = 0;
  std::int64_t d1_ = 0, d2_ = 0, d3_ = 0, n_ = 0;
};

MetricReport evaluate(const Tensor& pred, const Tensor& gt, const Tensor& mask);

}  // namespace kdepth::loss
