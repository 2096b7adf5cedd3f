#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "csst/graph.hpp"
#include "csst/rng.hpp"

namespace csst {

/// Quantile cut points at j / n_bins (j = 1..n_bins-1), linear interpolation
/// between order statistics. Throws ConfigError on empty input or n_bins == 0.
std::vector<double> quantile_bins(std::span<const double> values, std::size_t n_bins);

/// Bin j holds v with boundary[j-1] < v <= boundary[j]; bin 0 and the last
/// bin are unbounded.
std::size_t assign_bin(std::span<const double> boundaries, double value);

struct BinIndex {
  std::string attribute;
  std::vector<double> boundaries;
  // Bin of each POI, by position in the POI list.
  std::vector<std::size_t> bin_of;
  // Member positions of each bin, ascending.
  std::vector<std::vector<std::size_t>> members;

  std::size_t n_bins() const noexcept { return members.size(); }
};

BinIndex build_bin_index(std::string attribute, std::span<const double> values, std::size_t n_bins);

enum class PositiveSource {
  SameCell,      // area bin and report bin both match
  AreaFallback,  // no other POI shares the cell; same area bin only
  Unaugmentable  // nothing to sample from
};

struct PositiveSample {
  PositiveSource source = PositiveSource::Unaugmentable;
  std::vector<std::size_t> positives;
};

/// Area and total-report quantile bins over a POI list, with the candidate
/// pools for positive sampling.
class AugmentationIndex {
 public:
  AugmentationIndex() = default;
  AugmentationIndex(BinIndex area, BinIndex report);

  const BinIndex& area() const noexcept { return area_; }
  const BinIndex& report() const noexcept { return report_; }
  std::size_t size() const noexcept { return area_.bin_of.size(); }

  // Same area and report bin as `target`, excluding it.
  std::vector<std::size_t> pool(std::size_t target) const;
  // Same area bin as `target`, excluding it.
  std::vector<std::size_t> area_pool(std::size_t target) const;
  std::size_t pool_size(std::size_t target) const;
  std::size_t area_pool_size(std::size_t target) const;
  bool augmentable(std::size_t target) const { return area_pool_size(target) > 0; }

  /// m positives drawn uniformly from the cell pool, with replacement only
  /// when the pool holds fewer than m members. Falls back to the area-bin
  /// pool when the cell has no other member.
  PositiveSample sample_positives(std::size_t target, std::size_t m, Rng& rng) const;

 private:
  const std::vector<std::size_t>& cell_members(std::size_t target) const;

  BinIndex area_;
  BinIndex report_;
  std::vector<std::size_t> cell_of_;
  std::vector<std::vector<std::size_t>> cells_;
};

struct AugmentConfig {
  std::size_t n_bins_area = 10;
  std::size_t n_bins_report = 10;
};

AugmentationIndex build_index(std::span<const Poi> pois, std::size_t n_bins_area, std::size_t n_bins_report);

// m distinct positions in [0, n), or m draws with replacement when n < m.
std::vector<std::size_t> draw_positions(std::size_t n, std::size_t m, Rng& rng);
// Same rule applied to the entries of `pool`.
std::vector<std::size_t> draw_from_pool(std::span<const std::size_t> pool, std::size_t m, Rng& rng);

}  // namespace csst
