// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "kdepth/train/trainer.hpp"

namespace kdepth::train {

struct AblationRow {
  AblationFlags flags;
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<loss::MetricReport> val;  // final-epoch validation metrics per seed
  std::vector<double> acclimated_rmse;  // acclimated teacher on val, rows with FAM only
  std::vector<double> seconds;
  loss::MetricReport median;            // per-metric median over seeds
};

struct AblationTable {
  std::optional<loss::MetricReport> teacher_val;
  std::vector<AblationRow> rows;

  const AblationRow& row(const std::string& label) const;
  std::string to_json() const;
  /// Fixed-width text table, one line per row.
  std::string summary() const;
  /// Writes the JSON to `path` and the summary next to it with a .txt extension.
  void write(const std::string& path) const;
};

/// baseline, +LG, +LG+KD (plain feature KD), +LG+KD+FAM, full.
std::vector<AblationFlags> ablation_rows();

/// Trains every row once per seed in cfg.ablation_seeds (cfg.seed is replaced).
AblationTable run_ablation(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset& val,
                           std::shared_ptr<const model::DepthNet> teacher, std::ostream* log = nullptr);

double median(std::vector<double> values);

}  // namespace kdepth::train
