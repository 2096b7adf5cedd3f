#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "csst/dataset.hpp"
#include "csst/encoders.hpp"
#include "csst/finetune.hpp"

namespace csst {

struct CrossValidateConfig {
  std::vector<double> fractions{0.1, 0.2, 0.5, 0.7};
  double valid_fraction = 0.1;
  std::size_t folds = 10;
  // Subset of folds to run; empty runs all of them.
  std::vector<std::size_t> fold_indices;
  std::vector<Variant> variants{Variant::Mlp, Variant::MsfNet, Variant::Stgnn};
  std::vector<bool> pretrained{false, true};
  double epsilon = 0.3;

  void validate() const;
  std::vector<std::size_t> folds_to_run() const;
};

struct GridCell {
  Variant variant = Variant::Stgnn;
  bool pretrained = false;
  double fraction = 0.0;
  std::size_t fold = 0;
  Metrics metrics;
  std::size_t best_epoch = 0;
};

struct MetricsReport {
  std::string dataset;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  double epsilon = 0.3;
  std::vector<GridCell> cells;
};

// Fine-tuning seed of a grid cell; scratch and pretrained twins share it.
std::uint64_t cell_seed(std::uint64_t seed, Variant v, std::size_t fraction_index, std::size_t fold);

using CellCallback = std::function<void(const GridCell&)>;

/// Runs finetune + test evaluation for every (fraction, variant, pretrained,
/// fold) cell. `pretrained` supplies backbone parameters per variant for
/// the pretrained cells. Splits depend only on `seed`, fraction and fold.
MetricsReport cross_validate(const Dataset& ds, const AttributedGraph& graph, const FeatureScaler& scaler,
                             const FeatureTable& table, const BackboneConfig& backbone_cfg,
                             const FineTuneConfig& finetune_cfg, const CrossValidateConfig& cfg,
                             const std::map<Variant, ParamStore>& pretrained, std::uint64_t seed,
                             const CellCallback& on_cell = {});

/// Canonical JSON (sorted keys, two-space indent) of a report.
std::string metrics_json(const MetricsReport& report);
/// Flat CSV with one row per cell.
std::string metrics_csv(const MetricsReport& report);
/// Writes metrics.json and metrics.csv into `dir`.
void write_metrics(const MetricsReport& report, const std::filesystem::path& dir);

struct CellSummary {
  Variant variant;
  bool pretrained;
  double fraction;
  std::size_t folds;
  double mean_mape, mean_acc, median_acc;
};

/// Per (variant, pretrained, fraction) aggregate over folds.
std::vector<CellSummary> summarize(const MetricsReport& report);

}  // namespace csst
