#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csst/encoders.hpp"
#include "csst/graph.hpp"
#include "csst/optimizer.hpp"
#include "csst/params.hpp"

namespace csst {

/// Maps flows into (0, 1) for the sigmoid head: y / scale, clamped.
class TargetScaler {
 public:
  static constexpr double kHeadroom = 1.2;
  static constexpr double kLow = 1e-6;
  static constexpr double kHigh = 1.0 - 1e-6;

  TargetScaler() = default;
  explicit TargetScaler(double scale);

  double scale() const noexcept { return scale_; }
  double forward(double y) const;
  double inverse(double t) const { return t * scale_; }

 private:
  double scale_ = 1.0;
};

/// scale = 1.2 * max(train labels). Throws DataError without a positive label.
TargetScaler normalize_targets(std::span<const double> train_labels);

struct FineTuneConfig {
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double learning_rate = 1e-3;  // alpha
  double lr_divisor = 10.0;     // eta for a pretrained backbone; +inf freezes it
  // Divisor for a freshly initialized backbone, i.e. plain supervised training.
  double scratch_lr_divisor = 1.0;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;

  void validate() const;
};

/// Everything needed to predict flows for new instances.
struct Model {
  BackboneConfig backbone_cfg;
  FeatureScaler features;
  ParamStore backbone;
  ParamStore head;
  TargetScaler target;
};

struct EpochRecord {
  std::size_t epoch;
  double train_bce;
  double valid_mape;
};

struct FineTuneResult {
  Model model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// One instance per graph node (k-hop subgraph for STGNN, target only otherwise).
std::vector<Instance> build_instances(const AttributedGraph& graph, const BackboneConfig& cfg);

/// Mean soft binary cross-entropy of sigmoid(logits) against targets in (0, 1).
ad::Var bce_loss(ad::Tape& tape, ad::Var logits, std::span<const double> targets);

/// Fits backbone (at lr / eta) and head (at lr) on the labeled `train` nodes
/// and keeps the parameters of the epoch with the lowest validation MAPE.
/// `init` holds pretrained backbone parameters; without it the backbone is
/// freshly initialized. The head initialization depends only on `seed`.
FineTuneResult finetune(const AttributedGraph& graph, const FeatureTable& table, const FeatureScaler& scaler,
                        std::span<const Instance> instances, const BackboneConfig& backbone_cfg,
                        const ParamStore* init, std::span<const std::size_t> train,
                        std::span<const std::size_t> valid, const FineTuneConfig& cfg, std::uint64_t seed);

/// Original-scale flow predictions for the given graph nodes.
std::vector<double> predict(const Model& model, const FeatureTable& table, std::span<const Instance> instances,
                            std::span<const std::size_t> nodes);

// Per-instance absolute percentage errors |y - yhat| / y. Throws on y <= 0.
std::vector<double> percentage_errors(std::span<const double> y, std::span<const double> yhat);
/// Mean absolute percentage error. Throws DataError on any y_i == 0.
double mape(std::span<const double> y, std::span<const double> yhat);
/// Fraction of errors strictly below epsilon.
double acc(std::span<const double> errors, double epsilon);

struct Metrics {
  double mape = 0.0;
  double acc = 0.0;
  std::size_t n = 0;
  std::size_t excluded_zero_labels = 0;
};

/// Metrics over the instances with a positive label; zero labels are counted
/// and excluded.
Metrics evaluate_predictions(std::span<const double> y, std::span<const double> yhat, double epsilon = 0.3);

/// Labels of the given nodes. Throws DataError for unlabeled nodes.
std::vector<double> labels_of(const AttributedGraph& graph, std::span<const std::size_t> nodes);

Metrics evaluate(const Model& model, const AttributedGraph& graph, const FeatureTable& table,
                 std::span<const Instance> instances, std::span<const std::size_t> nodes, double epsilon = 0.3);

/// Model checkpoints: parameters, feature statistics and the configuration
/// needed to rebuild the model.
void save_model(const std::string& path, const Model& model, std::uint64_t config_hash);
Model load_model(const std::string& path, std::uint64_t* config_hash = nullptr);

}  // namespace csst
