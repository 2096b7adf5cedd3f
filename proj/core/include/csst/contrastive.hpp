#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csst/augment.hpp"
#include "csst/autodiff.hpp"
#include "csst/encoders.hpp"
#include "csst/optimizer.hpp"
#include "csst/params.hpp"
#include "csst/rng.hpp"

namespace csst {

struct PretrainConfig {
  std::size_t positives = 20;        // m
  std::size_t prototypes = 128;      // K
  std::size_t prototype_dim = 512;   // d_c
  std::size_t projection_layers = 1;
  // Subtract the batch mean of the backbone embeddings before projecting.
  bool center_embeddings = false;
  double temperature = 0.05;         // tau
  // Sinkhorn temperature (epsilon); 0 uses tau.
  double sinkhorn_temperature = 0.0;
  std::size_t batch_size = 256;
  std::size_t max_steps = 200;
  std::size_t sinkhorn_iterations = 3;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double learning_rate = 0.05;
  double weight_decay = 1e-4;
  // Draw fresh positives every step; otherwise each anchor keeps its first draw.
  bool resample_positives = true;
  // Moving-average early stop; disabled when plateau_patience == 0.
  std::size_t plateau_window = 20;
  std::size_t plateau_patience = 0;
  double plateau_tolerance = 1e-3;
  std::size_t n_bins_area = 10;
  std::size_t n_bins_report = 10;

  double code_temperature() const { return sinkhorn_temperature > 0.0 ? sinkhorn_temperature : temperature; }
  void validate() const;
};

/// Prototype bank parameter names.
namespace bank {
inline constexpr const char* kPrototypes = "prototypes/C";
inline constexpr const char* kProjection = "proj/";
}  // namespace bank

/// Projection layers ("proj/l<i>/W|b") and Kxd_c unit-norm prototypes.
ParamStore init_bank(std::size_t hidden, const PretrainConfig& cfg, Rng& rng);
void normalize_prototypes(ParamStore& bank_params);

// Affine projection d -> d_c (ReLU between layers when more than one).
// x minus its column means over the rows (a batch).
ad::Var center_rows(ad::Var x);

ad::Var project(ad::Tape& tape, const ParamStore& bank_params, ad::Var embeddings, std::size_t layers);

/// Softmax of scores / tau per row, max-subtracted.
Tensor prototype_probs_from_scores(const Tensor& scores, double temperature);
/// Projects and L2-normalizes `embedding` (1 x d) then scores it against the prototypes.
Tensor prototype_probs(const Tensor& embedding, const ParamStore& bank_params, const PretrainConfig& cfg);

/// Equal-partition codes: exp(scores / tau) alternately normalized over
/// columns (to B/K) and rows (to 1), `n_iters` times, ending on a row
/// normalization. Not differentiated.
Tensor sinkhorn_codes(const Tensor& scores, std::size_t n_iters, double temperature);

/// Swapped prediction loss averaged over (anchor_row, positive_row) pairs:
///   CE(q_pos, p_anchor) + CE(q_anchor, p_pos)
/// `normalized` holds one L2-normalized projected embedding per batch row.
ad::Var swapped_loss(ad::Tape& tape, ad::Var normalized, ad::Var prototypes,
                     std::span<const std::pair<std::size_t, std::size_t>> pairs, double temperature,
                     std::size_t sinkhorn_iterations);

/// Same objective when several batch rows share one embedding row:
/// batch row i uses unique row `row_of_batch[i]` of `normalized_unique`.
ad::Var swapped_loss(ad::Tape& tape, ad::Var normalized_unique, std::span<const std::size_t> row_of_batch,
                     ad::Var prototypes, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                     double temperature, std::size_t sinkhorn_iterations);

/// Codes of every batch row from the current scores (no gradient).
Tensor batch_codes(ad::Var normalized_unique, std::span<const std::size_t> row_of_batch, ad::Var prototypes,
                   double temperature, std::size_t sinkhorn_iterations);
/// The swapped loss against caller-supplied codes (one row per batch row).
ad::Var swapped_loss_with_codes(ad::Tape& tape, ad::Var normalized_unique, std::span<const std::size_t> row_of_batch,
                                ad::Var prototypes, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                const Tensor& codes, double temperature);

/// Single-pair value of the swapped loss for two backbone outputs (1 x d
/// each); codes come from the two-row batch.
double swapped_loss(const Tensor& o_anchor, const Tensor& o_positive, const ParamStore& bank_params,
                    const PretrainConfig& cfg);

struct LossRecord {
  std::size_t step;
  double loss;
  double wall_ms;
};

struct PretrainResult {
  ParamStore backbone;
  ParamStore bank;
  std::vector<LossRecord> losses;
  std::size_t steps = 0;
  std::size_t fallback_draws = 0;
  std::size_t unaugmentable = 0;
  bool early_stopped = false;
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Contrastive pretraining over every POI of `graph`. `index` must be built
/// over the same POI order. Throws DataError when no POI is augmentable.
PretrainResult pretrain(const AttributedGraph& graph, const FeatureTable& features, const AugmentationIndex& index,
                        const BackboneConfig& backbone_cfg, const PretrainConfig& cfg, std::uint64_t seed,
                        const StepCallback& on_step = {});

/// Pretraining loss for one batch of anchors (graph indices) and their
/// positives, evaluated on `tape`. Codes are computed from the batch unless
/// `fixed_codes` is given; `codes_out` receives the codes used.
ad::Var pretrain_batch_loss(ad::Tape& tape, const ParamStore& backbone, const ParamStore& bank_params,
                            const BackboneConfig& backbone_cfg, const PretrainConfig& cfg,
                            const FeatureTable& features, std::span<const Instance> instances,
                            std::span<const std::size_t> anchors,
                            std::span<const std::vector<std::size_t>> positives,
                            const Tensor* fixed_codes = nullptr, Tensor* codes_out = nullptr);

/// Pretrained backbone plus the contrastive bank, as stored on disk.
struct PretrainedBackbone {
  BackboneConfig backbone_cfg;
  ParamStore backbone;
  ParamStore bank;
  std::size_t steps = 0;
};

void save_pretrained(const std::string& path, const PretrainedBackbone& p, std::uint64_t config_hash);
PretrainedBackbone load_pretrained(const std::string& path, std::uint64_t* config_hash = nullptr);

void write_loss_log(const std::string& path, std::span<const LossRecord> losses);

}  // namespace csst
