// SPDX-License-Identifier: Apache-2.0
#include "kdepth/train/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace kdepth::train {
namespace {

using json = nlohmann::ordered_json;

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

json model_to_json(const model::DepthNetConfig& c) {
  json j;
  j["encoder"] = c.encoder;
  j["widths"] = c.widths;
  j["blocks_per_stage"] = c.blocks_per_stage;
  j["heads"] = c.heads;
  j["features"] = c.features;
  j["bins"] = c.bins.bins;
  j["d_min"] = c.bins.d_min;
  j["d_max"] = c.bins.d_max;
  j["bin_eps"] = c.bins.eps;
  j["lg_heads"] = c.lg_options.heads;
  j["lg_gamma0"] = c.lg_options.gamma0;
  return j;
}

model::DepthNetConfig model_from_json(const nlohmann::json& j, model::DepthNetConfig c, const std::string& where) {
  check_keys(j,
             {"encoder", "widths", "blocks_per_stage", "heads", "features", "bins", "d_min", "d_max", "bin_eps",
              "lg_heads", "lg_gamma0"},
             where);
  c.encoder = j.value("encoder", c.encoder);
  if (j.contains("widths")) c.widths = j.at("widths").get<model::Widths>();
  c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
  c.heads = j.value("heads", c.heads);
  c.features = j.value("features", c.features);
  c.bins.bins = j.value("bins", c.bins.bins);
  c.bins.d_min = j.value("d_min", c.bins.d_min);
  c.bins.d_max = j.value("d_max", c.bins.d_max);
  c.bins.eps = j.value("bin_eps", c.bins.eps);
  c.lg_options.heads = j.value("lg_heads", c.lg_options.heads);
  c.lg_options.gamma0 = j.value("lg_gamma0", c.lg_options.gamma0);
  return c;
}

}  // namespace

std::string AblationFlags::label() const {
  if (!lg && !kd) return "baseline";
  std::string s = lg ? "+LG" : "";
  if (kd) {
    s += "+KD";
    if (fam) s += "+FAM";
    if (fam && lam) s = lg ? "full" : s + "+LAM";
  }
  return s;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (teacher_epochs < 1) throw ConfigError("teacher_epochs must be at least 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) {
    throw ConfigError("warmup_epochs (" + std::to_string(warmup_epochs) + ") must lie in [0, epochs = " +
                      std::to_string(epochs) + ")");
  }
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (!(lr_start > 0) || !(lr_end >= 0) || lr_end > lr_start) {
    throw ConfigError("learning rates must satisfy 0 <= lr_end <= lr_start, lr_start > 0");
  }
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  loss.validate();
  if (student.encoder != "cnn") throw ConfigError("the student encoder must be the cnn family");
  if (ablation_seeds.empty()) throw ConfigError("ablation_seeds must not be empty");
}

model::DepthNetConfig TrainConfig::student_model() const {
  model::DepthNetConfig c = student;
  c.lg = flags.lg;
  return c;
}

std::string TrainConfig::to_json() const {
  json j;
  j["data"] = data;
  j["out"] = out;
  j["teacher_ckpt"] = teacher_ckpt;
  j["seed"] = seed;
  j["epochs"] = epochs;
  j["warmup_epochs"] = warmup_epochs;
  j["teacher_epochs"] = teacher_epochs;
  j["batch"] = batch;
  j["lr_start"] = lr_start;
  j["lr_end"] = lr_end;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_eps"] = adam_eps;
  j["weight_decay"] = weight_decay;
  j["flip"] = flip;
  j["lambda_kd"] = loss.lambda_kd;
  j["silog_alpha"] = loss.alpha;
  j["silog_beta"] = loss.beta;
  j["depth_eps"] = loss.depth_eps;
  j["ablation"] = {{"lg", flags.lg}, {"kd", flags.kd}, {"fam", flags.fam}, {"lam", flags.lam}};
  j["student"] = model_to_json(student);
  j["teacher"] = model_to_json(teacher);
  j["acclimation"] = {{"heads", acclimation.heads}, {"mlp_ratio", acclimation.mlp_ratio}};
  j["ablation_seeds"] = ablation_seeds;
  j["ablation_out"] = ablation_out;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"data", "out", "teacher_ckpt", "seed", "epochs", "warmup_epochs", "teacher_epochs", "batch", "lr_start",
              "lr_end", "beta1", "beta2", "adam_eps", "weight_decay", "flip", "lambda_kd", "silog_alpha", "silog_beta",
              "depth_eps", "ablation", "student", "teacher", "acclimation", "ablation_seeds", "ablation_out"},
             "config");
  TrainConfig c;
  try {
    c.data = j.value("data", c.data);
    c.out = j.value("out", c.out);
    c.teacher_ckpt = j.value("teacher_ckpt", c.teacher_ckpt);
    c.seed = j.value("seed", c.seed);
    c.epochs = j.value("epochs", c.epochs);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.teacher_epochs = j.value("teacher_epochs", c.teacher_epochs);
    c.batch = j.value("batch", c.batch);
    c.lr_start = j.value("lr_start", c.lr_start);
    c.lr_end = j.value("lr_end", c.lr_end);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.flip = j.value("flip", c.flip);
    c.loss.lambda_kd = j.value("lambda_kd", c.loss.lambda_kd);
    c.loss.alpha = j.value("silog_alpha", c.loss.alpha);
    c.loss.beta = j.value("silog_beta", c.loss.beta);
    c.loss.depth_eps = j.value("depth_eps", c.loss.depth_eps);
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      check_keys(a, {"lg", "kd", "fam", "lam"}, "ablation");
      c.flags.lg = a.value("lg", c.flags.lg);
      c.flags.kd = a.value("kd", c.flags.kd);
      c.flags.fam = a.value("fam", c.flags.fam);
      c.flags.lam = a.value("lam", c.flags.lam);
    }
    if (j.contains("student")) c.student = model_from_json(j.at("student"), c.student, "student");
    if (j.contains("teacher")) c.teacher = model_from_json(j.at("teacher"), c.teacher, "teacher");
    if (j.contains("acclimation")) {
      const auto& a = j.at("acclimation");
      check_keys(a, {"heads", "mlp_ratio"}, "acclimation");
      c.acclimation.heads = a.value("heads", c.acclimation.heads);
      c.acclimation.mlp_ratio = a.value("mlp_ratio", c.acclimation.mlp_ratio);
    }
    if (j.contains("ablation_seeds")) c.ablation_seeds = j.at("ablation_seeds").get<std::vector<std::uint64_t>>();
    c.ablation_out = j.value("ablation_out", c.ablation_out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return from_json(os.str());
}

}  // namespace kdepth::train
