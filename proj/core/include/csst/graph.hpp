#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace csst {

/// Sizes of the two crowd-portrait groups stored back to back in Poi::portrait.
struct PortraitLayout {
  std::size_t age_groups = 5;
  std::size_t gender_groups = 2;

  std::size_t size() const noexcept { return age_groups + gender_groups; }
  friend bool operator==(const PortraitLayout&, const PortraitLayout&) = default;
};

/// One point of interest.
struct Poi {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
  // Inherent attributes: area_m2, traffic_level, then location features.
  std::vector<double> attributes;
  // Age-group shares followed by gender shares.
  std::vector<double> portrait;
  // GPS-reported counts per interval of the window.
  std::vector<double> reports;
  // True flow per interval, when labeled.
  std::optional<double> label;

  double area() const { return attributes.at(0); }
  double total_reports() const;

  // Throws DataError when the POI violates its invariants.
  void validate(const PortraitLayout& layout, double tolerance = 1e-6) const;

  friend bool operator==(const Poi&, const Poi&) = default;
};

/// Great-circle distance in meters (haversine, mean Earth radius).
double haversine_m(double lon1, double lat1, double lon2, double lat2);

/// exp(-d^2 / sigma^2). Throws ConfigError if sigma <= 0 or d < 0.
double edge_weight(double distance_m, double sigma_m);

struct Neighbor {
  std::size_t index;
  double distance_m;
};

/// Directed k-NN graph: each node lists its (at most k) nearest POIs within
/// the cutoff, sorted by ascending distance with ties broken by id.
class AttributedGraph {
 public:
  AttributedGraph() = default;
  AttributedGraph(std::vector<Poi> nodes, std::vector<std::vector<Neighbor>> neighbors, std::size_t k, double cutoff_m);

  const std::vector<Poi>& nodes() const noexcept { return nodes_; }
  const Poi& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<Neighbor>& neighbors(std::size_t i) const { return neighbors_.at(i); }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t k() const noexcept { return k_; }
  double cutoff_m() const noexcept { return cutoff_m_; }
  std::size_t edge_count() const noexcept;

  std::optional<std::size_t> find(std::string_view id) const;
  // Throws DataError for unknown ids.
  std::size_t index_of(std::string_view id) const;

 private:
  std::vector<Poi> nodes_;
  std::vector<std::vector<Neighbor>> neighbors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t k_ = 0;
  double cutoff_m_ = 0.0;
};

AttributedGraph build_graph(std::vector<Poi> pois, std::size_t k, double cutoff_m);

/// Message edge inside an instance: dst aggregates a message from src.
/// Indices are positions in Instance::nodes.
struct InstanceEdge {
  std::size_t dst;
  std::size_t src;
  double distance_m;

  friend bool operator==(const InstanceEdge&, const InstanceEdge&) = default;
};

/// Hop-limited subgraph around a target POI. nodes[0] is the target.
struct Instance {
  std::size_t target = 0;
  std::string target_id;
  // Graph indices of the included POIs.
  std::vector<std::size_t> nodes;
  std::vector<InstanceEdge> edges;
  std::vector<double> reports;

  std::size_t neighbor_count() const noexcept { return nodes.empty() ? 0 : nodes.size() - 1; }
};

/// Breadth-first expansion from `target_id`. Each hop adds at most
/// `max_neighbors` new POIs, chosen nearest-first from the frontier's
/// neighbor lists; edges are kept between every included pair linked in
/// the graph.
Instance khop_subgraph(const AttributedGraph& g, std::string_view target_id, std::size_t hops,
                       std::size_t max_neighbors);
Instance khop_subgraph(const AttributedGraph& g, std::size_t target, std::size_t hops, std::size_t max_neighbors);

}  // namespace csst
