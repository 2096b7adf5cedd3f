#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "csst/graph.hpp"

namespace csst {

struct Dataset {
  std::string name = "dataset";
  std::vector<Poi> pois;
  std::size_t intervals = 0;  // D_r, the length of every report series
  std::size_t loc_features = 0;
  PortraitLayout layout;
  // Ground-truth mean flow of every POI when known (synthetic data), else empty.
  std::vector<double> truth;
  std::string provenance;

  // Positions of the labeled POIs, ascending.
  std::vector<std::size_t> labeled() const;
  // Ids unique, widths consistent, every POI valid.
  void validate() const;
};

/// Parameters of the synthetic city.
struct SynthConfig {
  std::size_t n_pois = 5000;
  std::size_t n_labeled = 500;
  double extent_km = 25.0;
  double center_lon = 116.40;
  double center_lat = 39.90;
  std::size_t intervals = 4;
  std::size_t age_groups = 5;
  std::size_t gender_groups = 2;
  std::size_t young_band = 1;  // age group counted as young adults
  std::size_t loc_features = 2;
  std::size_t traffic_levels = 3;

  // Spillover neighborhood.
  std::size_t k = 20;
  double cutoff_m = 1500.0;
  double sigma_m = 500.0;

  // log(area_m2) ~ N(area_log_mean, area_log_sd).
  double area_log_mean = 7.3;
  double area_log_sd = 0.7;

  // Flow model: u = w_area * z_area + w_portrait * young + w_traffic * level,
  // y = flow_scale * softplus(w0 + u + w_neighbor * spill + noise).
  double w0 = -0.5;
  double w_area = 0.8;
  double w_portrait = 3.0;
  double w_traffic = 0.3;
  double w_neighbor = 0.15;
  double noise_sd = 0.15;
  double flow_scale = 100.0;

  // Report ratio r ~ Beta(ratio_a, ratio_b) and multiplicative report noise.
  double ratio_a = 1.2;
  double ratio_b = 12.0;
  double seasonal_amplitude = 0.2;
  double report_noise_sd = 0.1;

  std::uint64_t seed = 7;

  void validate() const;
};

/// Node drive u of the flow model; its softplus is a POI's spillover base.
double synthetic_drive(const SynthConfig& cfg, double area_m2, double young_share, double traffic_level);
/// True flow for the given drive, spillover sum and noise draw.
double synthetic_flow(const SynthConfig& cfg, double drive, double spillover, double noise);
// 1 + amplitude * sin(2 pi (t + 0.5) / intervals).
double seasonal_factor(const SynthConfig& cfg, std::size_t t);

Dataset generate_synthetic(const SynthConfig& cfg);

// Median over POIs of total reports / total true flow.
double median_report_ratio(const Dataset& ds);

struct LoadSummary {
  std::size_t pois = 0;
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
  std::size_t renormalized_portraits = 0;
  std::vector<std::string> warnings;
};

/// Writes pois.csv, reports.csv and labels.csv (labeled POIs only) into `dir`.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Loads and validates the three CSV files; an empty labels path loads every
/// POI unlabeled. Malformed rows raise DataError with file and line.
Dataset load_dataset(const std::filesystem::path& pois_path, const std::filesystem::path& reports_path,
                     const std::filesystem::path& labels_path, LoadSummary* summary = nullptr);
Dataset load_dataset_dir(const std::filesystem::path& dir, LoadSummary* summary = nullptr);

struct Split {
  std::vector<std::size_t> train, valid, test;
};

/// Deterministic train/valid/test split of `labeled`. The labeled set is
/// shuffled once by `seed` and rotated by fold * n / n_folds; the first
/// round(valid * n) entries validate, the next round(train * n) train and
/// the rest test. Train sets of growing fractions therefore nest.
Split split_labeled(std::span<const std::size_t> labeled, double train_fraction, double valid_fraction,
                    std::size_t fold, std::size_t n_folds, std::uint64_t seed);
Split split(const Dataset& ds, double train_fraction, double valid_fraction, std::size_t fold, std::size_t n_folds,
            std::uint64_t seed);

}  // namespace csst
