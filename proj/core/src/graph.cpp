#include "csst/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <unordered_set>

#include "csst/error.hpp"

namespace csst {

namespace {

constexpr double kEarthRadiusM = 6371008.8;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

bool closer(const std::vector<Poi>& pois, const Neighbor& a, const Neighbor& b) {
  if (a.distance_m != b.distance_m) return a.distance_m < b.distance_m;
  return pois[a.index].id < pois[b.index].id;
}

}  // namespace

double Poi::total_reports() const { return std::accumulate(reports.begin(), reports.end(), 0.0); }

void Poi::validate(const PortraitLayout& layout, double tolerance) const {
  auto fail = [this](const std::string& why) { throw DataError("POI '" + id + "': " + why); };
  if (id.empty()) throw DataError("POI with empty id");
  if (!std::isfinite(lon) || !std::isfinite(lat) || std::abs(lat) > 90.0 || std::abs(lon) > 180.0)
    fail("invalid coordinates");
  if (attributes.empty()) fail("missing attributes");
  if (!(area() > 0.0)) fail("area must be positive");
  for (double a : attributes)
    if (!std::isfinite(a)) fail("non-finite attribute");
  if (portrait.size() != layout.size()) fail("portrait has wrong length");
  for (double p : portrait)
    if (!(p >= 0.0 && p <= 1.0)) fail("portrait share outside [0,1]");
  const double age = std::accumulate(portrait.begin(), portrait.begin() + static_cast<long>(layout.age_groups), 0.0);
  const double gender = std::accumulate(portrait.begin() + static_cast<long>(layout.age_groups), portrait.end(), 0.0);
  if (std::abs(age - 1.0) > tolerance) fail("age shares do not sum to 1");
  if (std::abs(gender - 1.0) > tolerance) fail("gender shares do not sum to 1");
  for (double x : reports)
    if (!(x >= 0.0) || !std::isfinite(x)) fail("reported counts must be finite and non-negative");
  if (label && (!(*label >= 0.0) || !std::isfinite(*label))) fail("label must be finite and non-negative");
}

double haversine_m(double lon1, double lat1, double lon2, double lat2) {
  const double p1 = deg2rad(lat1), p2 = deg2rad(lat2);
  const double dp = p2 - p1;
  const double dl = deg2rad(lon2 - lon1);
  const double s1 = std::sin(dp / 2.0), s2 = std::sin(dl / 2.0);
  const double h = s1 * s1 + std::cos(p1) * std::cos(p2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

double edge_weight(double distance_m, double sigma_m) {
  if (!(sigma_m > 0.0)) throw ConfigError("edge weight sigma must be positive");
  if (!(distance_m >= 0.0)) throw ConfigError("edge distance must be non-negative");
  return std::exp(-(distance_m * distance_m) / (sigma_m * sigma_m));
}

AttributedGraph::AttributedGraph(std::vector<Poi> nodes, std::vector<std::vector<Neighbor>> neighbors, std::size_t k,
                                 double cutoff_m)
    : nodes_(std::move(nodes)), neighbors_(std::move(neighbors)), k_(k), cutoff_m_(cutoff_m) {
  if (neighbors_.size() != nodes_.size()) throw DataError("neighbor lists do not match node count");
  index_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i].id, i).second) throw DataError("duplicate POI id '" + nodes_[i].id + "'");
  }
}

std::size_t AttributedGraph::edge_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : neighbors_) n += l.size();
  return n;
}

std::optional<std::size_t> AttributedGraph::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t AttributedGraph::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw DataError("unknown POI id '" + std::string(id) + "'");
}

AttributedGraph build_graph(std::vector<Poi> pois, std::size_t k, double cutoff_m) {
  if (!(cutoff_m > 0.0)) throw ConfigError("graph cutoff must be positive");
  {
    std::unordered_set<std::string> seen;
    for (const auto& p : pois) {
      if (!seen.insert(p.id).second) throw DataError("duplicate POI id '" + p.id + "'");
      if (!std::isfinite(p.lon) || !std::isfinite(p.lat) || std::abs(p.lat) > 90.0 || std::abs(p.lon) > 180.0)
        throw DataError("POI '" + p.id + "': invalid coordinates");
    }
  }
  const std::size_t n = pois.size();
  std::vector<std::vector<Neighbor>> neighbors(n);
  if (k == 0 || n < 2) return AttributedGraph(std::move(pois), std::move(neighbors), k, cutoff_m);

  // Bucket into cells at least `cutoff` wide so all in-range pairs sit in
  // adjacent cells. Fall back to all pairs where the bucketing degenerates.
  double max_abs_lat = 0.0, min_lon = 180.0, max_lon = -180.0;
  for (const auto& p : pois) {
    max_abs_lat = std::max(max_abs_lat, std::abs(p.lat));
    min_lon = std::min(min_lon, p.lon);
    max_lon = std::max(max_lon, p.lon);
  }
  const double cell_lat = cutoff_m / kEarthRadiusM * 180.0 / std::numbers::pi * 1.01;
  const double cos_lat = std::cos(deg2rad(std::min(90.0, max_abs_lat + cell_lat)));
  const bool bucketed = cos_lat > 1e-3 && (max_lon - min_lon) < 180.0;

  auto consider = [&](std::size_t i, std::size_t j, std::vector<Neighbor>& out) {
    const double d = haversine_m(pois[i].lon, pois[i].lat, pois[j].lon, pois[j].lat);
    if (d <= cutoff_m) out.push_back({j, d});
  };

  std::vector<std::vector<Neighbor>> candidates(n);
  if (bucketed) {
    const double cell_lon = cell_lat / cos_lat;
    std::map<std::pair<long, long>, std::vector<std::size_t>> cells;
    std::vector<std::pair<long, long>> key(n);
    for (std::size_t i = 0; i < n; ++i) {
      key[i] = {static_cast<long>(std::floor(pois[i].lat / cell_lat)), static_cast<long>(std::floor(pois[i].lon / cell_lon))};
      cells[key[i]].push_back(i);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (long di = -1; di <= 1; ++di)
        for (long dj = -1; dj <= 1; ++dj) {
          auto it = cells.find({key[i].first + di, key[i].second + dj});
          if (it == cells.end()) continue;
          for (std::size_t j : it->second)
            if (j != i) consider(i, j, candidates[i]);
        }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) consider(i, j, candidates[i]);
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& c = candidates[i];
    const std::size_t keep = std::min(k, c.size());
    std::partial_sort(c.begin(), c.begin() + static_cast<long>(keep), c.end(),
                      [&](const Neighbor& a, const Neighbor& b) { return closer(pois, a, b); });
    c.resize(keep);
    neighbors[i] = std::move(c);
  }
  return AttributedGraph(std::move(pois), std::move(neighbors), k, cutoff_m);
}

Instance khop_subgraph(const AttributedGraph& g, std::string_view target_id, std::size_t hops,
                       std::size_t max_neighbors) {
  return khop_subgraph(g, g.index_of(target_id), hops, max_neighbors);
}

Instance khop_subgraph(const AttributedGraph& g, std::size_t target, std::size_t hops, std::size_t max_neighbors) {
  if (target >= g.size()) throw DataError("khop_subgraph: target index out of range");
  const auto& nodes = g.nodes();
  auto truncated = [&](std::size_t u) {
    const auto& l = g.neighbors(u);
    return std::span<const Neighbor>(l.data(), std::min(l.size(), max_neighbors));
  };

  Instance inst;
  inst.target = target;
  inst.target_id = nodes[target].id;
  inst.reports = nodes[target].reports;
  inst.nodes.push_back(target);

  std::unordered_map<std::size_t, std::size_t> local{{target, 0}};
  std::vector<std::size_t> frontier{target};
  for (std::size_t h = 0; h < hops && !frontier.empty(); ++h) {
    std::vector<Neighbor> cand;
    for (std::size_t u : frontier)
      for (const Neighbor& nb : truncated(u))
        if (!local.contains(nb.index)) cand.push_back(nb);
    std::sort(cand.begin(), cand.end(), [&](const Neighbor& a, const Neighbor& b) { return closer(nodes, a, b); });
    std::vector<std::size_t> next;
    for (const Neighbor& nb : cand) {
      if (next.size() == max_neighbors) break;
      if (local.contains(nb.index)) continue;
      local.emplace(nb.index, inst.nodes.size());
      inst.nodes.push_back(nb.index);
      next.push_back(nb.index);
    }
    frontier = std::move(next);
  }

  for (std::size_t a = 0; a < inst.nodes.size(); ++a) {
    for (const Neighbor& nb : truncated(inst.nodes[a])) {
      auto it = local.find(nb.index);
      if (it != local.end()) inst.edges.push_back({a, it->second, nb.distance_m});
    }
  }
  return inst;
}

}  // namespace csst
