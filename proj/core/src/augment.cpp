#include "csst/augment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "csst/error.hpp"

namespace csst {

std::vector<double> quantile_bins(std::span<const double> values, std::size_t n_bins) {
  if (values.empty()) throw ConfigError("quantile_bins: empty input");
  if (n_bins == 0) throw ConfigError("quantile_bins: n_bins must be >= 1");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  cuts.reserve(n_bins - 1);
  const double last = static_cast<double>(sorted.size() - 1);
  for (std::size_t j = 1; j < n_bins; ++j) {
    const double pos = last * static_cast<double>(j) / static_cast<double>(n_bins);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    cuts.push_back(sorted[lo] + frac * (sorted[hi] - sorted[lo]));
  }
  return cuts;
}

std::size_t assign_bin(std::span<const double> boundaries, double value) {
  return static_cast<std::size_t>(std::lower_bound(boundaries.begin(), boundaries.end(), value) - boundaries.begin());
}

BinIndex build_bin_index(std::string attribute, std::span<const double> values, std::size_t n_bins) {
  BinIndex idx;
  idx.attribute = std::move(attribute);
  idx.boundaries = quantile_bins(values, n_bins);
  idx.members.resize(n_bins);
  idx.bin_of.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto b = assign_bin(idx.boundaries, values[i]);
    idx.bin_of.push_back(b);
    idx.members[b].push_back(i);
  }
  return idx;
}

AugmentationIndex::AugmentationIndex(BinIndex area, BinIndex report) : area_(std::move(area)), report_(std::move(report)) {
  if (area_.bin_of.size() != report_.bin_of.size()) throw ConfigError("bin indices cover different POI counts");
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> cell_ids;
  cell_of_.resize(area_.bin_of.size());
  for (std::size_t i = 0; i < cell_of_.size(); ++i) {
    const auto key = std::make_pair(area_.bin_of[i], report_.bin_of[i]);
    auto [it, inserted] = cell_ids.emplace(key, cells_.size());
    if (inserted) cells_.emplace_back();
    cell_of_[i] = it->second;
    cells_[it->second].push_back(i);
  }
}

const std::vector<std::size_t>& AugmentationIndex::cell_members(std::size_t target) const {
  return cells_.at(cell_of_.at(target));
}

namespace {
std::vector<std::size_t> without(const std::vector<std::size_t>& v, std::size_t self) {
  std::vector<std::size_t> out;
  out.reserve(v.size());
  for (auto x : v)
    if (x != self) out.push_back(x);
  return out;
}
}  // namespace

std::vector<std::size_t> AugmentationIndex::pool(std::size_t target) const { return without(cell_members(target), target); }

std::vector<std::size_t> AugmentationIndex::area_pool(std::size_t target) const {
  return without(area_.members.at(area_.bin_of.at(target)), target);
}

std::size_t AugmentationIndex::pool_size(std::size_t target) const { return cell_members(target).size() - 1; }

std::size_t AugmentationIndex::area_pool_size(std::size_t target) const {
  return area_.members.at(area_.bin_of.at(target)).size() - 1;
}

std::vector<std::size_t> draw_positions(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(m);
  if (n == 0 || m == 0) return out;
  if (n < m) {
    for (std::size_t i = 0; i < m; ++i) out.push_back(static_cast<std::size_t>(rng.below(n)));
    return out;
  }
  // Floyd's subset sampling: m distinct picks in O(m).
  std::unordered_set<std::size_t> chosen;
  for (std::size_t j = n - m; j < n; ++j) {
    const auto t = static_cast<std::size_t>(rng.below(j + 1));
    const std::size_t pick = chosen.contains(t) ? j : t;
    chosen.insert(pick);
    out.push_back(pick);
  }
  return out;
}

std::vector<std::size_t> draw_from_pool(std::span<const std::size_t> pool, std::size_t m, Rng& rng) {
  auto picks = draw_positions(pool.size(), m, rng);
  for (auto& p : picks) p = pool[p];
  return picks;
}

namespace {

// Samples from `members` (ascending) with `self` removed, without copying.
std::vector<std::size_t> draw_excluding(const std::vector<std::size_t>& members, std::size_t self, std::size_t m,
                                        Rng& rng) {
  const auto self_pos = static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), self) - members.begin());
  auto picks = draw_positions(members.size() - 1, m, rng);
  for (auto& p : picks) p = members[p < self_pos ? p : p + 1];
  return picks;
}

}  // namespace

PositiveSample AugmentationIndex::sample_positives(std::size_t target, std::size_t m, Rng& rng) const {
  if (m == 0) throw ConfigError("sample_positives: m must be >= 1");
  PositiveSample s;
  if (pool_size(target) > 0) {
    s.source = PositiveSource::SameCell;
    s.positives = draw_excluding(cell_members(target), target, m, rng);
  } else if (area_pool_size(target) > 0) {
    s.source = PositiveSource::AreaFallback;
    s.positives = draw_excluding(area_.members.at(area_.bin_of.at(target)), target, m, rng);
  }
  return s;
}

AugmentationIndex build_index(std::span<const Poi> pois, std::size_t n_bins_area, std::size_t n_bins_report) {
  if (pois.empty()) throw ConfigError("build_index: no POIs");
  std::vector<double> area, reports;
  area.reserve(pois.size());
  reports.reserve(pois.size());
  for (const auto& p : pois) {
    area.push_back(p.area());
    reports.push_back(p.total_reports());
  }
  return AugmentationIndex(build_bin_index("area", area, n_bins_area),
                           build_bin_index("total_reports", reports, n_bins_report));
}

}  // namespace csst
