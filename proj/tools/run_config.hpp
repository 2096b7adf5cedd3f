#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "csst/contrastive.hpp"
#include "csst/crossval.hpp"
#include "csst/dataset.hpp"
#include "csst/encoders.hpp"
#include "csst/finetune.hpp"

namespace csst::cli {

struct DataSource {
  // Directory holding pois.csv, reports.csv and labels.csv; the explicit
  // paths below take precedence. All empty means the synthetic city.
  std::string dir;
  std::string pois, reports, labels;
  bool synthetic() const { return dir.empty() && pois.empty(); }
};

struct GraphConfig {
  std::size_t k = 20;
  double cutoff_m = 500.0;
};

struct SplitConfig {
  double train_fraction = 0.7;
  double valid_fraction = 0.1;
  std::size_t fold = 0;
  std::size_t folds = 10;
};

struct EvaluateConfig {
  std::string split = "test";  // train, valid, test or labeled
  double epsilon = 0.3;
};

/// Every configurable value of a run. Built from defaults, then a JSON file,
/// then `section.key=value` overrides, in that order.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir;
  DataSource data;
  SynthConfig synth;
  GraphConfig graph;
  BackboneConfig backbone;
  PretrainConfig pretrain;
  FineTuneConfig finetune;
  SplitConfig split;
  EvaluateConfig evaluate;
  CrossValidateConfig ablate;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Throws ConfigError on unknown keys or mistyped values.
RunConfig from_json(const nlohmann::json& j);

// Merges `patch` into `base`; every key of `patch` must already exist in
// `base` with a compatible type. `where` prefixes error messages.
void merge_checked(nlohmann::json& base, const nlohmann::json& patch, const std::string& where = "");

// Applies one "section.key=value" override. The value is read as JSON when
// it parses, as a plain string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

RunConfig resolve(const std::filesystem::path& file, const std::vector<std::string>& overrides);

// Hash of the canonical resolved config, excluding the output directory.
std::uint64_t config_hash(const RunConfig& cfg);
// Hash of the settings a pretrained backbone depends on: data, graph and
// backbone (with the given variant).
std::uint64_t lineage_hash(const RunConfig& cfg, Variant variant);

std::string hex64(std::uint64_t v);

}  // namespace csst::cli
