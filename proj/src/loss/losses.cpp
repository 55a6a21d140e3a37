// SPDX-License-Identifier: Apache-2.0
#include "kdepth/loss/losses.hpp"

#include <cmath>
#include <json.hpp>

#include "kdepth/tensor/ops.hpp"
#include "kdepth/tensor/tape.hpp"

namespace kdepth::loss {

void LossConfig::validate() const {
  if (!(alpha > 0)) throw ConfigError("silog alpha must be positive");
  if (!(beta >= 0 && beta <= 1)) throw ConfigError("silog beta must lie in [0, 1], got " + std::to_string(beta));
  if (!(lambda_kd >= 0)) throw ConfigError("lambda_kd must be non-negative");
  if (!(depth_eps > 0)) throw ConfigError("depth_eps must be positive");
}

Tensor silog(const Tensor& pred, const Tensor& gt, const Tensor& mask, const LossConfig& config) {
  if (pred.shape() != gt.shape() || pred.shape() != mask.shape()) {
    throw ShapeError("silog: pred " + to_string(pred.shape()) + ", gt " + to_string(gt.shape()) + ", mask " +
                     to_string(mask.shape()) + " differ");
  }
  // Replace gt outside the mask by 1 so its log is defined; those pixels are zeroed below.
  std::vector<double> safe = gt.to_vector();
  const std::vector<double> m = mask.to_vector();
  double n = 0;
  for (std::size_t i = 0; i < safe.size(); ++i) {
    if (m[i] == 0.0) {
      safe[i] = 1.0;
      continue;
    }
    if (!(safe[i] > 0)) {
      throw DomainError("silog: non-positive ground-truth depth " + std::to_string(safe[i]) + " inside the mask");
    }
    n += 1.0;
  }
  const Tensor safe_gt = Tensor::from(gt.shape(), safe, gt.dtype());
  if (n == 0) throw DomainError("silog: empty mask");

  const Tensor g = mul(sub(log(clamp_min(pred, config.depth_eps)), log(safe_gt)), mask);
  const Tensor mean_sq = mul_scalar(sum_sq(g), 1.0 / n);
  const Tensor mean_g = mul_scalar(sum(g), 1.0 / n);
  const Tensor radicand = sub(mean_sq, mul_scalar(square(mean_g), config.beta));
  const double r = radicand.item();
  if (r < -1e-12 * std::max(1.0, mean_sq.item())) {
    throw DomainError("silog: negative radicand " + std::to_string(r) + " (beta > 1?)");
  }
  if (r <= 0) return mul_scalar(radicand, 0.0);
  return mul_scalar(sqrt(radicand), config.alpha);
}

Tensor attentive_kd(std::span<const Tensor> student, std::span<const Tensor> teacher, std::span<const Tensor> attention) {
  if (student.size() != teacher.size() || student.size() != attention.size() || student.empty()) {
    throw ShapeError("attentive_kd: stage counts differ");
  }
  Tensor total;
  double count = 0;
  for (std::size_t l = 0; l < student.size(); ++l) {
    const Tensor& fs = student[l];
    const Tensor& ft = teacher[l];
    const Tensor& a = attention[l];
    if (fs.shape() != ft.shape()) {
      throw ShapeError("attentive_kd: stage " + std::to_string(l + 1) + " student " + to_string(fs.shape()) +
                       " vs teacher " + to_string(ft.shape()));
    }
    bool broadcastable = a.rank() <= fs.rank();
    for (int d = 1; broadcastable && d <= a.rank(); ++d) {
      broadcastable = a.dim(-d) == 1 || a.dim(-d) == fs.dim(-d);
    }
    if (!broadcastable) {
      throw ShapeError("attentive_kd: stage " + std::to_string(l + 1) + " attention " + to_string(a.shape()) +
                       " does not broadcast to " + to_string(fs.shape()));
    }
    const Tensor term = sum_sq(mul(a, sub(fs, ft)));
    total = total.defined() ? add(total, term) : term;
    count += static_cast<double>(fs.numel());
  }
  return mul_scalar(total, 1.0 / count);
}

Objectives total_loss(const Tensor& student_pred, const Tensor& teacher_pred, const Tensor& gt, const Tensor& mask,
                      const Tensor& kd, bool warmup_active, const LossConfig& config) {
  Objectives o;
  o.student_task = silog(student_pred, gt, mask, config);
  o.student = o.student_task;
  if (kd.defined()) {
    o.kd_value = kd.item();
    if (!warmup_active && config.lambda_kd != 0.0) o.student = add(o.student, mul_scalar(kd, config.lambda_kd));
  }
  if (teacher_pred.defined()) {
    o.teacher_task = silog(teacher_pred, gt, mask, config);
    o.acclimation = o.teacher_task;
  }
  return o;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["abs_rel"] = abs_rel;
  j["sq_rel"] = sq_rel;
  j["rmse"] = rmse;
  j["log10"] = log10;
  j["delta1"] = delta1;
  j["delta2"] = delta2;
  j["delta3"] = delta3;
  j["n_valid"] = n_valid;
  return j.dump();
}

MetricReport MetricReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricReport r;
  r.abs_rel = j.at("abs_rel").get<double>();
  r.sq_rel = j.at("sq_rel").get<double>();
  r.rmse = j.at("rmse").get<double>();
  r.log10 = j.at("log10").get<double>();
  r.delta1 = j.at("delta1").get<double>();
  r.delta2 = j.at("delta2").get<double>();
  r.delta3 = j.at("delta3").get<double>();
  r.n_valid = j.at("n_valid").get<std::int64_t>();
  return r;
}

void MetricAccumulator::add(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
  if (pred.shape() != gt.shape() || pred.shape() != mask.shape()) {
    throw ShapeError("evaluate: pred " + to_string(pred.shape()) + " vs gt " + to_string(gt.shape()));
  }
  const auto p = pred.to_vector();
  const auto g = gt.to_vector();
  const auto m = mask.to_vector();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (m[i] == 0.0) continue;
    const double d = p[i], t = g[i];
    if (!(d > 0) || !(t > 0)) throw DomainError("evaluate: non-positive depth inside the mask");
    const double e = d - t;
    abs_rel_ += std::abs(e) / t;
    sq_rel_ += e * e / t;
    sq_ += e * e;
    log10_ += std::abs(std::log10(d) - std::log10(t));
    const double ratio = std::max(d / t, t / d);
    d1_ += ratio < 1.25;
    d2_ += ratio < 1.25 * 1.25;
    d3_ += ratio < 1.25 * 1.25 * 1.25;
    ++n_;
  }
}

MetricReport MetricAccumulator::report() const {
  if (n_ == 0) throw DomainError("evaluate: empty mask");
  const double n = static_cast<double>(n_);
  MetricReport r;
  r.abs_rel = abs_rel_ / n;
  r.sq_rel = sq_rel_ / n;
  r.rmse = std::sqrt(sq_ / n);
  r.log10 = log10_ / n;
  r.delta1 = static_cast<double>(d1_) / n;
  r.delta2 = static_cast<double>(d2_) / n;
  r.delta3 = static_cast<double>(d3_) / n;
  r.n_valid = n_;
  return r;
}

MetricReport evaluate(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
  MetricAccumulator acc;
  acc.add(pred, gt, mask);
  return acc.report();
}

}  // namespace kdepth::loss
