// SPDX-License-Identifier: Apache-2.0
#include "kdepth/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <ostream>

#include "kdepth/errors.hpp"
#include "kdepth/tensor/tape.hpp"

namespace kdepth::train {
namespace {

using json = nlohmann::ordered_json;

AdamOptions adam_options(const TrainConfig& cfg) {
  return {.beta1 = cfg.beta1, .beta2 = cfg.beta2, .eps = cfg.adam_eps, .weight_decay = cfg.weight_decay};
}

void check_finite(double value, const std::string& what, std::int64_t iteration) {
  if (!std::isfinite(value)) {
    throw DivergenceError(what + " became non-finite (" + std::to_string(value) + ") at iteration " +
                          std::to_string(iteration));
  }
}

json log_to_json(const EpochLog& e) {
  json j;
  j["epoch"] = e.epoch;
  j["lr"] = e.lr;
  j["task_loss"] = e.task_loss;
  j["kd_loss"] = e.kd_loss;
  j["teacher_task"] = e.teacher_task;
  if (e.val) j["val"] = json::parse(e.val->to_json());
  return j;
}

EpochLog log_from_json(const nlohmann::json& j) {
  EpochLog e;
  e.epoch = j.at("epoch").get<std::int64_t>();
  e.lr = j.at("lr").get<double>();
  e.task_loss = j.at("task_loss").get<double>();
  e.kd_loss = j.at("kd_loss").get<double>();
  e.teacher_task = j.at("teacher_task").get<double>();
  if (j.contains("val")) e.val = loss::MetricReport::from_json(j.at("val").dump());
  return e;
}

void print_epoch(std::ostream* os, const std::string& who, const EpochLog& e, std::int64_t epochs, double seconds) {
  if (os == nullptr) return;
  char buf[256];
  std::snprintf(buf, sizeof buf, "[%s] epoch %lld/%lld lr %.3g silog %.4f kd %.4g acc %.4f", who.c_str(),
                static_cast<long long>(e.epoch + 1), static_cast<long long>(epochs), e.lr, e.task_loss, e.kd_loss,
                e.teacher_task);
  *os << buf;
  if (e.val) {
    std::snprintf(buf, sizeof buf, " | val rmse %.4f abs_rel %.4f d1 %.4f", e.val->rmse, e.val->abs_rel,
                  e.val->delta1);
    *os << buf;
  }
  std::snprintf(buf, sizeof buf, " (%.1fs)\n", seconds);
  *os << buf << std::flush;
}

}  // namespace

loss::MetricReport evaluate_model(const model::DepthNet& net, const data::Dataset& ds, std::int64_t batch) {
  NoGradScope no_grad;
  loss::MetricAccumulator acc;
  data::BatchIterator it(ds, batch, 0, 0, false, false);
  while (!it.done()) {
    const data::Batch b = it.next();
    acc.add(net.forward(b.images, false).pred.depth, b.depth, b.mask);
  }
  return acc.report();
}

Checkpoint teacher_checkpoint(const TrainConfig& cfg, model::DepthNet& teacher, const loss::MetricReport& best_val,
                              std::int64_t best_epoch) {
  Checkpoint ck;
  ck.fingerprint = cfg.teacher.fingerprint();
  json meta;
  meta["kind"] = "teacher";
  meta["epoch"] = best_epoch;
  meta["best_val"] = json::parse(best_val.to_json());
  meta["config"] = json::parse(cfg.to_json());
  ck.meta = meta.dump();
  ck.put(teacher, "teacher");
  return ck;
}

TeacherResult train_teacher(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset& val,
                            std::ostream* log) {
  cfg.validate();
  const Rng root(cfg.seed);
  TeacherResult result;
  result.teacher = model::DepthNet(cfg.teacher, root.split(20));
  model::DepthNet& net = result.teacher;
  nn::ParameterStore store;
  store.collect(net, "teacher");
  Adam opt(adam_options(cfg));
  const std::uint64_t data_seed = root.split(21).key();
  const auto per_epoch = static_cast<std::int64_t>(data::BatchIterator(train, cfg.batch, data_seed, 0).num_batches());
  const std::int64_t total = per_epoch * cfg.teacher_epochs;

  std::map<std::string, Tensor> best;
  double best_rmse = std::numeric_limits<double>::infinity();
  std::int64_t it_global = 0;
  for (std::int64_t epoch = 0; epoch < cfg.teacher_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog e;
    e.epoch = epoch;
    data::BatchIterator it(train, cfg.batch, data_seed, epoch, true, cfg.flip);
    std::int64_t n = 0;
    while (!it.done()) {
      const data::Batch b = it.next();
      const double lr = linear_lr(it_global, total, cfg.lr_start, cfg.lr_end);
      Tape tape;
      Tensor l;
      {
        TapeScope scope(tape);
        l = loss::silog(net.forward(b.images, true).pred.depth, b.depth, b.mask, cfg.loss);
      }
      check_finite(l.item(), "teacher loss", it_global);
      tape.backward(l);
      opt.step(store, lr);
      store.zero_grad();
      e.lr = lr;
      e.task_loss += l.item();
      ++n;
      ++it_global;
    }
    e.task_loss /= static_cast<double>(n);
    e.val = evaluate_model(net, val, cfg.batch);
    if (e.val->rmse < best_rmse) {
      best_rmse = e.val->rmse;
      result.best_val = *e.val;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& entry : store.entries()) best[entry.name] = entry.tensor.clone();
    }
    result.epochs.push_back(e);
    print_epoch(log, "teacher", e, cfg.teacher_epochs,
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  for (auto& entry : store.entries()) entry.tensor.copy_data_from(best.at(entry.name));
  if (!cfg.out.empty()) {
    save_checkpoint(cfg.out, teacher_checkpoint(cfg, net, result.best_val, result.best_epoch));
  }
  return result;
}

model::DepthNet load_teacher(const std::string& path, const model::DepthNetConfig& config) {
  const Checkpoint ck = load_checkpoint(path, config.fingerprint());
  std::string kind;
  try {
    kind = nlohmann::json::parse(ck.meta).value("kind", "");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad checkpoint metadata: " + e.what());
  }
  if (kind != "teacher") throw FormatError(path + ": expected a teacher checkpoint, found kind '" + kind + "'");
  model::DepthNet net(config, Rng(0));
  ck.get(net, "teacher");
  nn::set_requires_grad(net, false);
  return net;
}

StudentTrainer::StudentTrainer(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset* val,
                               std::shared_ptr<const model::DepthNet> teacher)
    : cfg_(cfg),
      train_(&train),
      val_(val),
      teacher_(std::move(teacher)),
      student_opt_(adam_options(cfg)),
      acc_opt_(adam_options(cfg)) {
  cfg_.validate();
  const Rng root(cfg_.seed);
  const model::DepthNetConfig scfg = cfg_.student_model();
  student_ = model::DepthNet(scfg, root.split(10));
  student_store_.collect(student_, "student");
  if (cfg_.flags.kd) {
    if (!teacher_) throw ConfigError("distillation is enabled but no teacher was given");
    const model::Widths tw = teacher_->widths();
    if (cfg_.flags.fam) {
      Rng rng = root.split(11);
      model::AcclimationOptions opts = cfg_.acclimation;
      opts.fam = true;
      opts.lam = cfg_.flags.lam;
      acc_ = model::AcclimatedTeacher(tw, scfg, opts, rng);
      acc_store_.collect(acc_, "acc");
      acc_store_.set_frozen("acc.ghost", true);
    } else {
      Rng rng = root.split(12);
      for (std::size_t l = 0; l < 4; ++l) {
        connectors_[l] = nn::Conv2d(scfg.widths[l], tw[l], 1, 1, false, rng);
        connectors_[l].visit("connector" + std::to_string(l + 1), [this](const std::string& name, Tensor& t,
                                                                       nn::ParamKind kind) {
          student_store_.add(name, t, kind);
        });
      }
    }
  }
  data_seed_ = root.split(13).key();
  per_epoch_ = static_cast<std::int64_t>(data::BatchIterator(train, cfg_.batch, data_seed_, 0).num_batches());
}

void StudentTrainer::emit(Phase phase, std::int64_t epoch, bool warmup) {
  if (hook_) hook_(*this, Event{phase, iteration_, epoch, warmup});
}

void StudentTrainer::run_until(std::int64_t end) {
  end = std::min(end, total_iterations());
  while (iteration_ < end) step();
}

void StudentTrainer::step() {
  const std::int64_t i = iteration_;
  const std::int64_t epoch = i / per_epoch_;
  const std::int64_t k = i % per_epoch_;
  const bool warmup = epoch < cfg_.warmup_epochs;
  const double lr = linear_lr(i, total_iterations(), cfg_.lr_start, cfg_.lr_end);
  if (k == 0) epoch_start_ = std::chrono::steady_clock::now();

  if (!batches_ || batches_epoch_ != epoch || batches_pos_ != k) {
    batches_.emplace(*train_, cfg_.batch, data_seed_, epoch, true, cfg_.flip);
    for (std::int64_t s = 0; s < k; ++s) batches_->next();
    batches_epoch_ = epoch;
  }
  const data::Batch b = batches_->next();
  batches_pos_ = k + 1;

  if (acclimating()) acc_.sync_ghost(student_.decoder, i);
  emit(Phase::after_sync, epoch, warmup);

  model::Pyramid tf;
  if (distilling()) {
    NoGradScope no_grad;
    tf = teacher_->encode(b.images, false);
  }

  Tape tape_t;
  Tensor teacher_task;
  model::AcclimatedTeacher::Output acc_out;
  if (acclimating()) {
    TapeScope scope(tape_t);
    acc_out = acc_.forward(tf, i);
    teacher_task = loss::silog(acc_out.pred.depth, b.depth, b.mask, cfg_.loss);
  }

  Tape tape_s;
  loss::Objectives obj;
  {
    TapeScope scope(tape_s);
    const model::DepthNet::Output s = student_.forward(b.images, true);
    Tensor kd;
    if (distilling()) {
      std::optional<NoGradScope> gated;
      if (warmup) gated.emplace();
      std::array<Tensor, 4> student_side, target, scores;
      for (std::size_t l = 0; l < 4; ++l) {
        if (acclimating()) {
          student_side[l] = s.features[l];
          target[l] = acc_out.adapted[l].detach();
          scores[l] = acc_out.scores[l].detach();
        } else {
          student_side[l] = connectors_[l].forward(s.features[l]);
          target[l] = tf[l];
          scores[l] = Tensor::ones({tf[l].dim(0), 1, tf[l].dim(2), tf[l].dim(3)}, tf[l].dtype());
        }
      }
      kd = loss::attentive_kd(student_side, target, scores);
    }
    obj = loss::total_loss(s.pred.depth, Tensor(), b.depth, b.mask, kd, warmup, cfg_.loss);
  }
  check_finite(obj.student.item(), "student loss", i);
  if (teacher_task.defined()) check_finite(teacher_task.item(), "acclimation loss", i);

  tape_s.backward(obj.student);
  emit(Phase::after_student_backward, epoch, warmup);
  student_opt_.step(student_store_, lr);
  student_store_.zero_grad();

  if (acclimating()) {
    tape_t.backward(teacher_task);
    emit(Phase::after_acclimation_backward, epoch, warmup);
    acc_opt_.step(acc_store_, lr);
    acc_store_.zero_grad();
  }

  current_.epoch = epoch;
  current_.lr = lr;
  current_.task_loss += obj.student_task.item();
  current_.kd_loss += obj.kd_value;
  if (teacher_task.defined()) current_.teacher_task += teacher_task.item();
  ++current_count_;

  ++iteration_;
  emit(Phase::after_step, epoch, warmup);
  if (k + 1 == per_epoch_) finish_epoch(epoch);
}

void StudentTrainer::finish_epoch(std::int64_t epoch) {
  EpochLog e = current_;
  const auto n = static_cast<double>(std::max<std::int64_t>(current_count_, 1));
  e.epoch = epoch;
  e.task_loss /= n;
  e.kd_loss /= n;
  e.teacher_task /= n;
  if (val_ != nullptr) e.val = evaluate(*val_);
  log_.push_back(e);
  current_ = EpochLog{};
  current_count_ = 0;
  print_epoch(out_, cfg_.flags.label(), e, cfg_.epochs,
              std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start_).count());
}

loss::MetricReport StudentTrainer::evaluate_acclimated(const data::Dataset& ds) {
  if (!acclimating()) throw ConfigError("evaluate_acclimated needs distillation with FAM enabled");
  acc_.sync_ghost(student_.decoder, iteration_);
  NoGradScope no_grad;
  loss::MetricAccumulator acc;
  data::BatchIterator it(ds, cfg_.batch, 0, 0, false, false);
  while (!it.done()) {
    const data::Batch b = it.next();
    acc.add(acc_.forward_unchecked(teacher_->encode(b.images, false)).pred.depth, b.depth, b.mask);
  }
  return acc.report();
}

Checkpoint StudentTrainer::checkpoint() const {
  Checkpoint ck;
  ck.fingerprint = cfg_.student_model().fingerprint();
  for (const auto& e : student_store_.entries()) ck.entries[e.name] = e.tensor;
  for (const auto& e : acc_store_.entries()) ck.entries[e.name] = e.tensor;
  student_opt_.export_state("optim/student/", ck.entries);
  if (acclimating()) acc_opt_.export_state("optim/acc/", ck.entries);
  for (auto& [name, t] : ck.entries) t = t.clone();

  json meta;
  meta["kind"] = "student";
  meta["iteration"] = iteration_;
  meta["epoch"] = iteration_ / per_epoch_;
  meta["flags"] = cfg_.flags.label();
  meta["teacher_fingerprint"] = teacher_ ? teacher_->config.fingerprint() : "";
  meta["config"] = json::parse(cfg_.to_json());
  json logs = json::array();
  for (const auto& e : log_) logs.push_back(log_to_json(e));
  meta["log"] = logs;
  meta["partial"] = log_to_json(current_);
  meta["partial_count"] = current_count_;
  if (!log_.empty() && log_.back().val) meta["val"] = json::parse(log_.back().val->to_json());
  ck.meta = meta.dump();
  return ck;
}

void StudentTrainer::save(const std::string& path) const { save_checkpoint(path, checkpoint()); }

void StudentTrainer::restore(const Checkpoint& ck) {
  if (ck.fingerprint != cfg_.student_model().fingerprint()) {
    throw FormatError("checkpoint fingerprint '" + ck.fingerprint + "' does not match the student '" +
                      cfg_.student_model().fingerprint() + "'");
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ck.meta);
    if (meta.value("kind", "") != "student") throw FormatError("not a student checkpoint");
    const std::string tf = teacher_ ? teacher_->config.fingerprint() : "";
    if (meta.value("teacher_fingerprint", "") != tf) {
      throw FormatError("checkpoint was trained against teacher '" + meta.value("teacher_fingerprint", "") + "'");
    }
    for (auto& e : student_store_.entries()) e.tensor.copy_data_from(ck.at(e.name, e.tensor));
    for (auto& e : acc_store_.entries()) e.tensor.copy_data_from(ck.at(e.name, e.tensor));
    student_opt_.import_state("optim/student/", ck.entries);
    if (acclimating()) acc_opt_.import_state("optim/acc/", ck.entries);
    iteration_ = meta.at("iteration").get<std::int64_t>();
    log_.clear();
    for (const auto& e : meta.at("log")) log_.push_back(log_from_json(e));
    current_ = log_from_json(meta.at("partial"));
    current_count_ = meta.at("partial_count").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
  }
  batches_.reset();
  batches_epoch_ = -1;
  batches_pos_ = -1;
}

}  // namespace kdepth::train
