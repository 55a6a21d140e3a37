// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>

#include "kdepth/data/dataset.hpp"
#include "kdepth/train/checkpoint.hpp"
#include "kdepth/train/config.hpp"
#include "kdepth/train/optimizer.hpp"

namespace kdepth::train {

struct EpochLog {
  std::int64_t epoch = 0;
  double lr = 0;
  double task_loss = 0;     // mean student (or teacher) SILog over the epoch
  double kd_loss = 0;       // mean attentive KD value, logged during warmup too
  double teacher_task = 0;  // mean acclimation SILog
  std::optional<loss::MetricReport> val;
};

/// Mean-over-pixels metrics of a model in eval mode, batches of `batch` in index order.
loss::MetricReport evaluate_model(const model::DepthNet& net, const data::Dataset& ds, std::int64_t batch = 8);

struct TeacherResult {
  model::DepthNet teacher;  // weights of the best validation epoch
  loss::MetricReport best_val;
  std::int64_t best_epoch = 0;
  std::vector<EpochLog> epochs;
};

/// Trains cfg.teacher with SILog alone for cfg.teacher_epochs and keeps the
/// epoch with the lowest validation RMSE; saved to cfg.out when set.
TeacherResult train_teacher(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset& val,
                            std::ostream* log = nullptr);

Checkpoint teacher_checkpoint(const TrainConfig& cfg, model::DepthNet& teacher, const loss::MetricReport& best_val,
                              std::int64_t best_epoch);
/// Loads a teacher checkpoint; FormatError when it was not built from `config`.
model::DepthNet load_teacher(const std::string& path, const model::DepthNetConfig& config);

/// Student training with optional distillation. Per iteration i:
///   1. fetch batch (seeded shuffle and flip of epoch i / iterations_per_epoch)
///   2. copy the student decoder into the ghost decoder
///   3. teacher encoder forward (eval mode, no gradients)
///   4. FAM -> adapter -> LAM -> ghost decoder, recorded on the acclimation tape;
///      KD targets are the adapter outputs, weighted by the LAM scores
///   5. student forward and SILog + lambda * KD on the student tape
///      (KD is computed for the log but left out of the graph during warmup)
///   6. student backward and Adam step
///   7. acclimation backward and Adam step (FAM, adapters, LAM only)
/// Without FAM the KD target is the raw teacher feature, reached from the
/// student side through a 1x1 connector per stage, and A = 1.
class StudentTrainer {
 public:
  enum class Phase { after_sync, after_student_backward, after_acclimation_backward, after_step };
  struct Event {
    Phase phase;
    std::int64_t iteration;
    std::int64_t epoch;
    bool warmup;
  };
  using Hook = std::function<void(StudentTrainer&, const Event&)>;

  /// `teacher` is required when cfg.flags.kd; it is never modified.
  StudentTrainer(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset* val,
                 std::shared_ptr<const model::DepthNet> teacher);

  void set_hook(Hook hook) { hook_ = std::move(hook); }
  /// Trains up to (excluding) global iteration `end`, capped at the total.
  void run_until(std::int64_t end);
  void run() { run_until(total_iterations()); }

  std::int64_t iteration() const { return iteration_; }
  std::int64_t iterations_per_epoch() const { return per_epoch_; }
  std::int64_t total_iterations() const { return per_epoch_ * cfg_.epochs; }
  bool distilling() const { return cfg_.flags.kd; }
  bool acclimating() const { return cfg_.flags.kd && cfg_.flags.fam; }

  model::DepthNet& student() { return student_; }
  model::AcclimatedTeacher& acclimated() { return acc_; }
  const model::DepthNet* teacher() const { return teacher_.get(); }
  nn::ParameterStore& student_store() { return student_store_; }
  nn::ParameterStore& acclimation_store() { return acc_store_; }
  const std::vector<EpochLog>& log() const { return log_; }
  const TrainConfig& config() const { return cfg_; }

  loss::MetricReport evaluate(const data::Dataset& ds) const { return evaluate_model(student_, ds, cfg_.batch); }
  /// Teacher encoder + FAM + adapters + LAM + ghost decoder synced to the
  /// current student decoder. Needs acclimating().
  loss::MetricReport evaluate_acclimated(const data::Dataset& ds);

  /// Complete training state: weights, buffers, optimizer moments, iteration.
  Checkpoint checkpoint() const;
  void save(const std::string& path) const;
  /// Restores a state produced by checkpoint() under the same configuration.
  void restore(const Checkpoint& ckpt);

  void set_log_stream(std::ostream* os) { out_ = os; }

 private:
  void step();
  void emit(Phase phase, std::int64_t epoch, bool warmup);
  void finish_epoch(std::int64_t epoch);

  TrainConfig cfg_;
  const data::Dataset* train_;
  const data::Dataset* val_;
  std::shared_ptr<const model::DepthNet> teacher_;
  model::DepthNet student_;
  model::AcclimatedTeacher acc_;
  std::array<nn::Conv2d, 4> connectors_;
  nn::ParameterStore student_store_;
  nn::ParameterStore acc_store_;
  Adam student_opt_;
  Adam acc_opt_;
  std::uint64_t data_seed_ = 0;
  std::int64_t per_epoch_ = 0;
  std::int64_t iteration_ = 0;
  std::optional<data::BatchIterator> batches_;
  std::int64_t batches_epoch_ = -1;
  std::int64_t batches_pos_ = -1;
  std::chrono::steady_clock::time_point epoch_start_;
  EpochLog current_;
  std::int64_t current_count_ = 0;
  std::vector<EpochLog> log_;
  Hook hook_;
  std::ostream* out_ = nullptr;
};

}  // namespace kdepth::train
