#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "csst/autodiff.hpp"
#include "csst/graph.hpp"
#include "csst/params.hpp"
#include "csst/rng.hpp"

namespace csst {

enum class Variant { Mlp, MsfNet, Stgnn };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

struct BackboneConfig {
  Variant variant = Variant::Stgnn;
  std::size_t hidden = 64;      // d
  std::size_t mlp_layers = 2;   // L_m
  std::size_t conv_layers = 1;  // L_c
  double sigma_m = 500.0;
  std::size_t hops = 1;
  std::size_t max_neighbors = 20;
  // Input widths, fixed by the dataset.
  std::size_t attr_dim = 0;      // D_a
  std::size_t portrait_dim = 0;  // D_c
  std::size_t report_dim = 0;    // D_r

  void validate() const;
  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Parameter-name prefixes of each group.
namespace groups {
inline constexpr const char* kAttr = "f_a/";
inline constexpr const char* kPortrait = "f_c/";
inline constexpr const char* kEdge = "f_e/";
inline constexpr const char* kMessage = "f_g/";
inline constexpr const char* kReport = "f_n/";
inline constexpr const char* kFusion = "f_s/";
inline constexpr const char* kHead = "f_o/";
}  // namespace groups

// Groups a variant owns, e.g. {"f_s/"} for the MLP.
std::vector<std::string> backbone_groups(Variant v);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization of every backbone layer.
ParamStore init_backbone(const BackboneConfig& cfg, Rng& rng);
// Linear regression head d -> 1.
ParamStore init_head(const BackboneConfig& cfg, Rng& rng);

/// Per-column standardization of the raw POI inputs. Area enters as
/// log(area) and reports as log1p(count); portrait shares pass through.
class FeatureScaler {
 public:
  FeatureScaler() = default;
  static FeatureScaler fit(std::span<const Poi> pois);

  std::vector<double> attributes(const Poi& p) const;
  std::vector<double> portrait(const Poi& p) const;
  std::vector<double> reports(std::span<const double> x) const;

  // Stores/loads the statistics as "input/..." tensors.
  ParamStore to_params() const;
  static FeatureScaler from_params(const ParamStore& p);

  std::size_t attr_dim() const noexcept { return attr_mean_.size(); }
  std::size_t report_dim() const noexcept { return report_mean_.size(); }

 private:
  std::vector<double> attr_mean_, attr_std_, report_mean_, report_std_;
};

/// Scaled inputs for every node of a graph, one row per node.
struct FeatureTable {
  Tensor attributes;  // N x D_a
  Tensor portrait;    // N x D_c
  Tensor reports;     // N x D_r

  static FeatureTable build(const AttributedGraph& g, const FeatureScaler& scaler);
  std::size_t size() const { return attributes.rows(); }
};

/// Stack of affine layers with ReLU after each, named prefix + "l<i>/W|b".
ad::Var mlp_forward(ad::Tape& tape, const ParamStore& params, const std::string& prefix, ad::Var x,
                    std::size_t layers);

/// Backbone outputs for the distinct targets of a batch (ascending graph
/// index) and the row each input instance maps to.
struct BatchEmbedding {
  ad::Var unique;
  std::vector<std::size_t> row_of_input;
};

BatchEmbedding backbone_forward_dedup(ad::Tape& tape, const ParamStore& params, const BackboneConfig& cfg,
                                      const FeatureTable& features, std::span<const Instance> instances);

/// Batched backbone: one output row (length d) per instance, in input order.
/// Instances with the same target are evaluated once.
ad::Var backbone_forward(ad::Tape& tape, const ParamStore& params, const BackboneConfig& cfg,
                         const FeatureTable& features, std::span<const Instance> instances);

// Logits of the regression head, one per row of `embeddings`.
ad::Var head_logits(ad::Tape& tape, const ParamStore& head, ad::Var embeddings);

// Value-level entry points over single inputs.

Tensor encode_node(std::span<const double> attr_features, std::span<const double> portrait, const ParamStore& params,
                   const BackboneConfig& cfg);
Tensor encode_edge(double distance_m, const ParamStore& params, const BackboneConfig& cfg);
// Sum of message-network outputs over (p_self, p_neighbor_j, e_j) rows; the
// empty-neighbor case uses a self message at distance 0.
Tensor mpnn_aggregate(const Tensor& p_self, const Tensor& p_neighbors, const Tensor& edges, const ParamStore& params,
                      const BackboneConfig& cfg, std::size_t round = 0);
Tensor encode_reports(std::span<const double> report_features, const ParamStore& params, const BackboneConfig& cfg);
Tensor fuse(const Tensor& o_reports, const Tensor& o_graph, const ParamStore& params, const BackboneConfig& cfg);
Tensor backbone_forward(const Instance& instance, const ParamStore& params, const BackboneConfig& cfg,
                        const FeatureTable& features);
double regress(const Tensor& embedding, const ParamStore& head);

}  // namespace csst
