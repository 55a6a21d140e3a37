// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "kdepth/errors.hpp"
#include "kdepth/train/ablation.hpp"
#include "kdepth/train/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using namespace kdepth;

namespace {

struct DataSpecFile {
  data::SceneSpec scene;
  std::int64_t train = 256;
  std::int64_t val = 64;
};

std::string read_file(const std::string& path, bool config) {
  std::ifstream in(path);
  if (!in) {
    if (config) throw ConfigError("cannot open " + path);
    throw FormatError("cannot open " + path);
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// {"scene": {SceneSpec}, "train": N, "val": M}
DataSpecFile load_data_spec(const std::string& path) {
  DataSpecFile s;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path, true));
    for (const auto& [k, v] : j.items()) {
      if (k != "scene" && k != "train" && k != "val") throw ConfigError(path + ": unknown key '" + k + "'");
    }
    if (j.contains("scene")) s.scene = data::SceneSpec::from_json(j.at("scene").dump());
    s.train = j.value("train", s.train);
    s.val = j.value("val", s.val);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (s.train < 1 || s.val < 1) throw ConfigError(path + ": train and val counts must be positive");
  return s;
}

std::pair<data::Dataset, data::Dataset> load_splits(const train::TrainConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("config: 'data' must name a directory holding train/ and val/");
  return {data::load_dataset(fs::path(cfg.data) / "train"), data::load_dataset(fs::path(cfg.data) / "val")};
}

std::shared_ptr<const model::DepthNet> load_teacher(const train::TrainConfig& cfg) {
  if (cfg.teacher_ckpt.empty()) throw ConfigError("distillation needs a teacher checkpoint (--teacher)");
  return std::make_shared<const model::DepthNet>(train::load_teacher(cfg.teacher_ckpt, cfg.teacher));
}

int cmd_gen_data(const std::string& spec_path, const std::string& out, const std::optional<std::uint64_t>& seed) {
  DataSpecFile s = load_data_spec(spec_path);
  if (seed) s.scene.seed = *seed;
  s.scene.validate();
  data::write_dataset(s.scene, s.train, fs::path(out) / "train", 0);
  data::write_dataset(s.scene, s.val, fs::path(out) / "val", s.train);
  std::cout << "wrote " << s.train << " train and " << s.val << " val scenes (" << s.scene.height << "x"
            << s.scene.width << ") to " << out << "\n";
  return 0;
}

int cmd_train_teacher(train::TrainConfig cfg) {
  const auto [tr, va] = load_splits(cfg);
  const auto result = train::train_teacher(cfg, tr, va, &std::cout);
  std::cout << "best epoch " << result.best_epoch + 1 << " val " << result.best_val.to_json() << "\n";
  if (!cfg.out.empty()) std::cout << "saved " << cfg.out << "\n";
  return 0;
}

int cmd_train_student(train::TrainConfig cfg) {
  if (cfg.flags.kd && !cfg.flags.fam && cfg.flags.lam) {
    std::cerr << "warning: LAM scores come from acclimated features; without FAM the KD term is unweighted\n";
  }
  const auto [tr, va] = load_splits(cfg);
  std::shared_ptr<const model::DepthNet> teacher;
  if (cfg.flags.kd) teacher = load_teacher(cfg);
  train::StudentTrainer trainer(cfg, tr, &va, teacher);
  trainer.set_log_stream(&std::cout);
  trainer.run();
  std::cout << "final val " << trainer.evaluate(va).to_json() << "\n";
  if (!cfg.out.empty()) {
    trainer.save(cfg.out);
    std::cout << "saved " << cfg.out << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& json_out) {
  const train::Checkpoint ck = train::load_checkpoint(ckpt_path);
  nlohmann::json meta;
  train::TrainConfig cfg;
  try {
    meta = nlohmann::json::parse(ck.meta);
    cfg = train::TrainConfig::from_json(meta.at("config").dump());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(ckpt_path + ": bad checkpoint metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(ckpt_path + ": stored config is invalid: " + e.what());
  }
  const std::string kind = meta.value("kind", "");
  model::DepthNetConfig arch;
  std::string prefix;
  if (kind == "teacher") {
    arch = cfg.teacher;
    prefix = "teacher";
  } else if (kind == "student") {
    arch = cfg.student_model();
    prefix = "student";
  } else {
    throw FormatError(ckpt_path + ": unknown checkpoint kind '" + kind + "'");
  }
  if (arch.fingerprint() != ck.fingerprint) {
    throw FormatError(ckpt_path + ": fingerprint '" + ck.fingerprint + "' does not match its config '" +
                      arch.fingerprint() + "'");
  }
  model::DepthNet net(arch, Rng(0));
  ck.get(net, prefix);
  const data::Dataset ds = data::load_dataset(data_dir);
  const std::string report = train::evaluate_model(net, ds, cfg.batch).to_json();
  std::cout << report << "\n";
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    out << report << '\n';
    if (!out) throw FormatError("cannot write " + json_out);
  }
  return 0;
}

int cmd_ablation(train::TrainConfig cfg, const std::optional<std::uint64_t>& seed) {
  if (seed) {
    for (auto& s : cfg.ablation_seeds) s += *seed;
  }
  const auto [tr, va] = load_splits(cfg);
  const auto teacher = load_teacher(cfg);
  const auto table = train::run_ablation(cfg, tr, va, teacher, &std::cout);
  std::cout << table.summary();
  const std::string out = cfg.ablation_out.empty() ? "ablation.json" : cfg.ablation_out;
  table.write(out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& module) {
  bool ok = true;
  for (const auto& m : train::run_gradcheck_suite(module)) {
    const bool pass = m.report.passed(train::kGradcheckTolerance);
    ok = ok && pass;
    std::printf("%-14s max_rel %.3e  %-4s (%.2fs)\n", m.module.c_str(), m.report.max_rel_error(),
                pass ? "PASS" : "FAIL", m.seconds);
    if (!pass) std::printf("%s\n", m.report.summary().c_str());
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kdepth: depth estimation with cross-architecture distillation"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::string config_path, spec_path, out_dir, ckpt_out, teacher_path, ckpt_path, data_dir, json_out, module;
  bool no_lg = false, no_kd = false, no_fam = false, no_lam = false;
  std::optional<std::int64_t> warmup;
  std::optional<double> lambda_kd;

  auto* gen = app.add_subcommand("gen-data", "Generate train/ and val/ synthetic scenes");
  gen->add_option("--spec", spec_path, "JSON {scene: {...}, train: N, val: M}")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* tt = app.add_subcommand("train-teacher", "Train the teacher with SILog and keep the best val epoch");
  tt->add_option("--config", config_path)->required();
  tt->add_option("--out", ckpt_out, "Checkpoint path (overrides out)");

  auto* ts = app.add_subcommand("train-student", "Train the student, distilling from a teacher checkpoint");
  ts->add_option("--config", config_path)->required();
  ts->add_option("--teacher", teacher_path, "Teacher checkpoint (overrides teacher_ckpt)");
  ts->add_option("--out", ckpt_out, "Checkpoint path (overrides out)");
  ts->add_flag("--no-lg", no_lg);
  ts->add_flag("--no-kd", no_kd);
  ts->add_flag("--no-fam", no_fam);
  ts->add_flag("--no-lam", no_lam);
  ts->add_option("--warmup", warmup, "Warmup epochs");
  ts->add_option("--lambda-kd", lambda_kd, "Distillation weight");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset directory");
  ev->add_option("--ckpt", ckpt_path)->required();
  ev->add_option("--data", data_dir)->required();
  ev->add_option("--json", json_out, "Also write the report here");

  auto* ab = app.add_subcommand("ablation", "Run the five ablation rows over the configured seeds");
  ab->add_option("--config", config_path)->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--module", module, "One module; all when omitted");

  for (auto* sub : {gen, tt, ts, ev, ab, gc}) sub->add_option("--seed", seed, "Seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(spec_path, out_dir, seed);
    if (*ev) return cmd_eval(ckpt_path, data_dir, json_out);
    if (*gc) return cmd_gradcheck(module);
    train::TrainConfig cfg = train::TrainConfig::load(config_path);
    if (seed && !*ab) cfg.seed = *seed;
    if (!ckpt_out.empty()) cfg.out = ckpt_out;
    if (*tt) return cmd_train_teacher(cfg);
    if (*ab) return cmd_ablation(cfg, seed);
    if (!teacher_path.empty()) cfg.teacher_ckpt = teacher_path;
    if (no_lg) cfg.flags.lg = false;
    if (no_kd) cfg.flags.kd = false;
    if (no_fam) cfg.flags.fam = false;
    if (no_lam) cfg.flags.lam = false;
    if (warmup) cfg.warmup_epochs = *warmup;
    if (lambda_kd) cfg.loss.lambda_kd = *lambda_kd;
    cfg.validate();
    return cmd_train_student(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
