// SPDX-License-Identifier: Apache-2.0
#include "kdepth/train/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <ostream>

#include "kdepth/errors.hpp"

namespace kdepth::train {

using json = nlohmann::ordered_json;

double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

loss::MetricReport median_report(const std::vector<loss::MetricReport>& rs) {
  auto pick = [&](double loss::MetricReport::*field) {
    std::vector<double> v;
    for (const auto& r : rs) v.push_back(r.*field);
    return median(v);
  };
  loss::MetricReport m;
  m.abs_rel = pick(&loss::MetricReport::abs_rel);
  m.sq_rel = pick(&loss::MetricReport::sq_rel);
  m.rmse = pick(&loss::MetricReport::rmse);
  m.log10 = pick(&loss::MetricReport::log10);
  m.delta1 = pick(&loss::MetricReport::delta1);
  m.delta2 = pick(&loss::MetricReport::delta2);
  m.delta3 = pick(&loss::MetricReport::delta3);
  m.n_valid = rs.front().n_valid;
  return m;
}

}  // namespace

std::vector<AblationFlags> ablation_rows() {
  return {
      {.lg = false, .kd = false, .fam = false, .lam = false},
      {.lg = true, .kd = false, .fam = false, .lam = false},
      {.lg = true, .kd = true, .fam = false, .lam = false},
      {.lg = true, .kd = true, .fam = true, .lam = false},
      {.lg = true, .kd = true, .fam = true, .lam = true},
  };
}

const AblationRow& AblationTable::row(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw ConfigError("no ablation row labelled '" + label + "'");
}

std::string AblationTable::to_json() const {
  json j;
  if (teacher_val) j["teacher_val"] = json::parse(teacher_val->to_json());
  j["rows"] = json::array();
  for (const auto& r : rows) {
    json jr;
    jr["label"] = r.label;
    jr["flags"] = {{"lg", r.flags.lg}, {"kd", r.flags.kd}, {"fam", r.flags.fam}, {"lam", r.flags.lam}};
    jr["seeds"] = r.seeds;
    jr["median"] = json::parse(r.median.to_json());
    jr["per_seed"] = json::array();
    for (const auto& v : r.val) jr["per_seed"].push_back(json::parse(v.to_json()));
    if (!r.acclimated_rmse.empty()) jr["acclimated_rmse"] = r.acclimated_rmse;
    jr["seconds"] = r.seconds;
    j["rows"].push_back(jr);
  }
  return j.dump(2);
}

std::string AblationTable::summary() const {
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s %8s %8s %8s %8s\n", "row", "abs_rel", "sq_rel", "rmse", "log10",
                "d1", "d2", "d3");
  s += buf;
  auto line = [&](const std::string& label, const loss::MetricReport& m) {
    std::snprintf(buf, sizeof buf, "%-12s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", label.c_str(), m.abs_rel,
                  m.sq_rel, m.rmse, m.log10, m.delta1, m.delta2, m.delta3);
    s += buf;
  };
  if (teacher_val) line("teacher", *teacher_val);
  for (const auto& r : rows) line(r.label, r.median);
  for (const auto& r : rows) {
    if (r.acclimated_rmse.empty()) continue;
    std::snprintf(buf, sizeof buf, "acclimated teacher (%s): median rmse %.4f\n", r.label.c_str(),
                  median(r.acclimated_rmse));
    s += buf;
  }
  s += "medians over seeds";
  for (std::size_t i = 0; i < (rows.empty() ? 0 : rows.front().seeds.size()); ++i) {
    s += (i == 0 ? " " : ",") + std::to_string(rows.front().seeds[i]);
  }
  s += "\n";
  return s;
}

void AblationTable::write(const std::string& path) const {
  {
    std::ofstream out(path);
    out << to_json() << '\n';
    if (!out) throw FormatError("cannot write " + path);
  }
  std::ofstream out(std::filesystem::path(path).replace_extension(".txt"));
  out << summary();
}

AblationTable run_ablation(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset& val,
                           std::shared_ptr<const model::DepthNet> teacher, std::ostream* log) {
  cfg.validate();
  AblationTable table;
  if (teacher) table.teacher_val = evaluate_model(*teacher, val, cfg.batch);
  for (const AblationFlags& flags : ablation_rows()) {
    AblationRow row;
    row.flags = flags;
    row.label = flags.label();
    row.seeds = cfg.ablation_seeds;
    for (std::uint64_t seed : cfg.ablation_seeds) {
      TrainConfig c = cfg;
      c.seed = seed;
      c.flags = flags;
      const auto t0 = std::chrono::steady_clock::now();
      StudentTrainer trainer(c, train, nullptr, flags.kd ? teacher : nullptr);
      trainer.run();
      row.val.push_back(trainer.evaluate(val));
      if (trainer.acclimating()) row.acclimated_rmse.push_back(trainer.evaluate_acclimated(val).rmse);
      row.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      if (log != nullptr) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "[ablation] %-12s seed %llu rmse %.4f abs_rel %.4f (%.0fs)\n",
                      row.label.c_str(), static_cast<unsigned long long>(seed), row.val.back().rmse,
                      row.val.back().abs_rel, row.seconds.back());
        *log << buf << std::flush;
      }
    }
    row.median = median_report(row.val);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace kdepth::train
