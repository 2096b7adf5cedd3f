#include "csst/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "csst/augment.hpp"
#include "csst/error.hpp"
#include "csst/rng.hpp"

namespace csst {

namespace {

enum Stream : std::uint64_t {
  kPlace = 21,
  kAttributes = 22,
  kPortrait = 23,
  kNoise = 24,
  kReports = 25,
  kLabeled = 26,
  kSplit = 27
};

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

std::vector<double> dirichlet(Rng& rng, std::span<const double> alpha) {
  std::vector<double> out(alpha.size());
  double s = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) s += out[i] = rng.gamma(alpha[i]);
  for (double& v : out) v /= s;
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::size_t> Dataset::labeled() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pois.size(); ++i)
    if (pois[i].label) out.push_back(i);
  return out;
}

void Dataset::validate() const {
  if (pois.empty()) throw DataError("dataset '" + name + "' has no POIs");
  std::unordered_set<std::string> seen;
  const std::size_t da = 2 + loc_features;
  for (const Poi& p : pois) {
    if (!seen.insert(p.id).second) throw DataError("duplicate POI id '" + p.id + "'");
    p.validate(layout, 1e-6);
    if (p.attributes.size() != da) throw DataError("POI '" + p.id + "' has the wrong attribute count");
    if (p.reports.size() != intervals) throw DataError("POI '" + p.id + "' has the wrong report length");
  }
  if (!truth.empty() && truth.size() != pois.size()) throw DataError("ground truth does not cover every POI");
}

void SynthConfig::validate() const {
  if (n_pois < 10) throw ConfigError("synth.n_pois must be >= 10");
  if (n_labeled < 1 || n_labeled > n_pois) throw ConfigError("synth.n_labeled must be in [1, n_pois]");
  if (!(extent_km > 0.0)) throw ConfigError("synth.extent_km must be positive");
  if (std::abs(center_lat) > 80.0 || std::abs(center_lon) > 180.0) throw ConfigError("synth center out of range");
  if (intervals < 1) throw ConfigError("synth.intervals must be >= 1");
  if (age_groups < 1 || gender_groups < 1) throw ConfigError("synth portrait groups must be >= 1");
  if (young_band >= age_groups) throw ConfigError("synth.young_band must index an age group");
  if (traffic_levels < 1) throw ConfigError("synth.traffic_levels must be >= 1");
  if (k < 1 || !(cutoff_m > 0.0) || !(sigma_m > 0.0)) throw ConfigError("synth neighborhood parameters must be positive");
  const double weights[] = {area_log_mean, area_log_sd, w0,      w_area,  w_portrait,         w_traffic,
                            w_neighbor,    noise_sd,    ratio_a, ratio_b, seasonal_amplitude, report_noise_sd};
  for (double w : weights)
    if (!std::isfinite(w)) throw ConfigError("synth weights must be finite");
  if (!(area_log_sd > 0.0) || !(noise_sd >= 0.0) || !(report_noise_sd >= 0.0))
    throw ConfigError("synth spreads must be non-negative");
  if (!(flow_scale > 0.0)) throw ConfigError("synth.flow_scale must be positive");
  if (!(ratio_a > 0.0) || !(ratio_b > 0.0)) throw ConfigError("synth ratio parameters must be positive");
  if (!(seasonal_amplitude >= 0.0 && seasonal_amplitude < 1.0)) throw ConfigError("synth.seasonal_amplitude must be in [0,1)");
}

double synthetic_drive(const SynthConfig& cfg, double area_m2, double young_share, double traffic_level) {
  const double z_area = (std::log(area_m2) - cfg.area_log_mean) / cfg.area_log_sd;
  return cfg.w_area * z_area + cfg.w_portrait * young_share + cfg.w_traffic * (traffic_level - 1.0);
}

double synthetic_flow(const SynthConfig& cfg, double drive, double spillover, double noise) {
  return cfg.flow_scale * softplus(cfg.w0 + drive + cfg.w_neighbor * spillover + noise);
}

double seasonal_factor(const SynthConfig& cfg, std::size_t t) {
  const double phase = 2.0 * std::numbers::pi * (static_cast<double>(t) + 0.5) / static_cast<double>(cfg.intervals);
  return 1.0 + cfg.seasonal_amplitude * std::sin(phase);
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_pois;
  Rng place = Rng::derive(cfg.seed, kPlace);
  Rng attr = Rng::derive(cfg.seed, kAttributes);
  Rng portrait = Rng::derive(cfg.seed, kPortrait);
  Rng noise = Rng::derive(cfg.seed, kNoise);
  Rng reports = Rng::derive(cfg.seed, kReports);
  Rng labeled = Rng::derive(cfg.seed, kLabeled);

  constexpr double kKmPerDegLat = 111.32;
  const double half = cfg.extent_km / 2.0;
  const double km_per_deg_lon = kKmPerDegLat * std::cos(cfg.center_lat * std::numbers::pi / 180.0);

  std::vector<double> age_alpha(cfg.age_groups, 2.0);
  age_alpha[cfg.young_band] = 3.0;
  const std::vector<double> gender_alpha(cfg.gender_groups, 5.0);

  Dataset ds;
  ds.name = "synthetic";
  ds.intervals = cfg.intervals;
  ds.loc_features = cfg.loc_features;
  ds.layout = {cfg.age_groups, cfg.gender_groups};
  ds.pois.resize(n);
  char idbuf[32];
  for (std::size_t i = 0; i < n; ++i) {
    Poi& p = ds.pois[i];
    std::snprintf(idbuf, sizeof(idbuf), "poi_%05zu", i);
    p.id = idbuf;
    const double x = place.uniform(-half, half), y = place.uniform(-half, half);
    p.lon = cfg.center_lon + x / km_per_deg_lon;
    p.lat = cfg.center_lat + y / kKmPerDegLat;

    const double area = std::exp(attr.normal(cfg.area_log_mean, cfg.area_log_sd));
    const double level = 1.0 + static_cast<double>(attr.below(cfg.traffic_levels));
    p.attributes = {area, level};
    // Distance to the center (in extents) and a nuisance feature.
    for (std::size_t j = 0; j < cfg.loc_features; ++j)
      p.attributes.push_back(j == 0 ? std::hypot(x, y) / cfg.extent_km : attr.uniform());

    p.portrait = dirichlet(portrait, age_alpha);
    const auto g = dirichlet(portrait, gender_alpha);
    p.portrait.insert(p.portrait.end(), g.begin(), g.end());
  }

  // Spillover from neighbors: sum_j exp(-d^2 / sigma^2) * softplus(u_j).
  std::vector<double> drive(n), base(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Poi& p = ds.pois[i];
    drive[i] = synthetic_drive(cfg, p.attributes[0], p.portrait[cfg.young_band], p.attributes[1]);
    base[i] = softplus(drive[i]);
  }
  const AttributedGraph g = build_graph(ds.pois, cfg.k, cfg.cutoff_m);
  ds.truth.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double spill = 0.0;
    for (const Neighbor& nb : g.neighbors(i)) spill += edge_weight(nb.distance_m, cfg.sigma_m) * base[nb.index];
    ds.truth[i] = synthetic_flow(cfg, drive[i], spill, noise.normal(0.0, cfg.noise_sd));
  }

  for (std::size_t i = 0; i < n; ++i) {
    Poi& p = ds.pois[i];
    const double r = reports.beta(cfg.ratio_a, cfg.ratio_b);
    p.reports.resize(cfg.intervals);
    for (std::size_t t = 0; t < cfg.intervals; ++t) {
      const double s = cfg.report_noise_sd;
      const double jitter = std::exp(reports.normal(-0.5 * s * s, s));
      p.reports[t] = std::min(ds.truth[i], r * ds.truth[i] * seasonal_factor(cfg, t) * jitter);
    }
  }

  for (auto pos : draw_positions(n, cfg.n_labeled, labeled)) ds.pois[pos].label = ds.truth[pos];

  std::ostringstream prov;
  prov << "synthetic seed=" << cfg.seed << " n_pois=" << n << " n_labeled=" << cfg.n_labeled;
  ds.provenance = prov.str();
  ds.validate();
  return ds;
}

double median_report_ratio(const Dataset& ds) {
  if (ds.truth.size() != ds.pois.size() || ds.pois.empty()) throw DataError("median_report_ratio needs ground truth");
  std::vector<double> ratio;
  ratio.reserve(ds.pois.size());
  for (std::size_t i = 0; i < ds.pois.size(); ++i) {
    const double total = ds.truth[i] * static_cast<double>(ds.intervals);
    if (total > 0.0) ratio.push_back(ds.pois[i].total_reports() / total);
  }
  if (ratio.empty()) throw DataError("no POI with positive flow");
  const std::size_t mid = ratio.size() / 2;
  std::nth_element(ratio.begin(), ratio.begin() + static_cast<long>(mid), ratio.end());
  double m = ratio[mid];
  if (ratio.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(ratio.begin(), ratio.begin() + static_cast<long>(mid)));
  }
  return m;
}

// ---- CSV ----

namespace {

std::vector<std::string> pois_header(const Dataset& ds) {
  std::vector<std::string> h = {"id", "lon", "lat", "area_m2", "traffic_level"};
  for (std::size_t j = 1; j <= ds.loc_features; ++j) h.push_back("loc_feat_" + std::to_string(j));
  for (std::size_t j = 1; j <= ds.layout.age_groups; ++j) h.push_back("age_share_" + std::to_string(j));
  for (std::size_t j = 1; j <= ds.layout.gender_groups; ++j) h.push_back("gender_share_" + std::to_string(j));
  return h;
}

void write_row(std::ostream& os, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
  os << '\n';
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot write " + p.string());
  return os;
}

class CsvReader {
 public:
  explicit CsvReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open " + path.string());
  }

  bool next(std::vector<std::string>& cells) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      cells.clear();
      std::size_t start = 0;
      for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw DataError(path_.string() + ":" + std::to_string(line_) + ": " + why);
  }

  double number(const std::string& cell, const std::string& column) const {
    double v = 0.0;
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end || cell.empty()) fail("malformed number '" + cell + "' in column " + column);
    if (!std::isfinite(v)) fail("non-finite value in column " + column);
    return v;
  }

  std::size_t index(const std::string& cell, const std::string& column) const {
    std::size_t v = 0;
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end || cell.empty()) fail("malformed index '" + cell + "' in column " + column);
    return v;
  }

  void expect_header(const std::vector<std::string>& expected) {
    std::vector<std::string> cells;
    if (!next(cells)) fail("missing header");
    if (cells != expected) {
      std::string want;
      for (const auto& c : expected) want += (want.empty() ? "" : ",") + c;
      fail("header must be '" + want + "'");
    }
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_ = 0;
};

std::size_t count_prefixed(const std::vector<std::string>& header, std::size_t from, const std::string& prefix) {
  std::size_t n = 0;
  while (from + n < header.size() && header[from + n] == prefix + std::to_string(n + 1)) ++n;
  return n;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / "pois.csv");
    write_row(os, pois_header(ds));
    for (const Poi& p : ds.pois) {
      std::vector<std::string> row = {p.id, fmt(p.lon), fmt(p.lat)};
      for (double a : p.attributes) row.push_back(fmt(a));
      for (double s : p.portrait) row.push_back(fmt(s));
      write_row(os, row);
    }
  }
  {
    auto os = open_out(dir / "reports.csv");
    write_row(os, {"poi_id", "interval_index", "reported_count"});
    for (const Poi& p : ds.pois)
      for (std::size_t t = 0; t < p.reports.size(); ++t) write_row(os, {p.id, std::to_string(t), fmt(p.reports[t])});
  }
  {
    auto os = open_out(dir / "labels.csv");
    write_row(os, {"poi_id", "interval_index", "true_flow"});
    for (const Poi& p : ds.pois) {
      if (!p.label) continue;
      for (std::size_t t = 0; t < ds.intervals; ++t) write_row(os, {p.id, std::to_string(t), fmt(*p.label)});
    }
  }
}

Dataset load_dataset(const std::filesystem::path& pois_path, const std::filesystem::path& reports_path,
                     const std::filesystem::path& labels_path, LoadSummary* summary) {
  LoadSummary local;
  LoadSummary& sum = summary ? *summary : local;
  sum = {};
  Dataset ds;
  ds.name = pois_path.parent_path().filename().string();
  if (ds.name.empty()) ds.name = "dataset";
  ds.provenance = pois_path.string() + ";" + reports_path.string() + ";" + labels_path.string();

  std::unordered_map<std::string, std::size_t> index;
  {
    CsvReader csv(pois_path);
    std::vector<std::string> header;
    if (!csv.next(header)) csv.fail("missing header");
    const std::vector<std::string> fixed = {"id", "lon", "lat", "area_m2", "traffic_level"};
    if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin()))
      csv.fail("header must start with id,lon,lat,area_m2,traffic_level");
    std::size_t at = fixed.size();
    ds.loc_features = count_prefixed(header, at, "loc_feat_");
    at += ds.loc_features;
    ds.layout.age_groups = count_prefixed(header, at, "age_share_");
    at += ds.layout.age_groups;
    ds.layout.gender_groups = count_prefixed(header, at, "gender_share_");
    at += ds.layout.gender_groups;
    if (ds.layout.age_groups == 0) csv.fail("missing age_share_1.. columns");
    if (ds.layout.gender_groups == 0) csv.fail("missing gender_share_1.. columns");
    if (at != header.size()) csv.fail("unexpected column '" + header[at] + "'");

    std::vector<std::string> row;
    while (csv.next(row)) {
      if (row.size() != header.size())
        csv.fail("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(row.size()));
      Poi p;
      p.id = row[0];
      if (p.id.empty()) csv.fail("empty id");
      if (!index.emplace(p.id, ds.pois.size()).second) csv.fail("duplicate id '" + p.id + "'");
      p.lon = csv.number(row[1], "lon");
      p.lat = csv.number(row[2], "lat");
      for (std::size_t j = 3; j < 5 + ds.loc_features; ++j) p.attributes.push_back(csv.number(row[j], header[j]));
      if (!(p.attributes[0] > 0.0)) csv.fail("area_m2 must be positive");
      for (std::size_t j = 5 + ds.loc_features; j < header.size(); ++j) {
        const double s = csv.number(row[j], header[j]);
        if (s < 0.0) csv.fail("negative share in column " + header[j]);
        p.portrait.push_back(s);
      }
      bool renormalized = false;
      auto renorm = [&](std::size_t lo, std::size_t hi, const char* what) {
        double s = 0.0;
        for (std::size_t j = lo; j < hi; ++j) s += p.portrait[j];
        if (std::abs(s - 1.0) > 1e-3) csv.fail(std::string(what) + " shares sum to " + fmt(s) + ", not 1");
        // Rounding-level drift is left alone so saved datasets load unchanged.
        if (std::abs(s - 1.0) > 1e-12) {
          for (std::size_t j = lo; j < hi; ++j) p.portrait[j] /= s;
          renormalized = true;
        }
      };
      renorm(0, ds.layout.age_groups, "age");
      renorm(ds.layout.age_groups, ds.layout.size(), "gender");
      if (renormalized) {
        ++sum.renormalized_portraits;
        sum.warnings.push_back("portrait of '" + p.id + "' renormalized");
      }
      ds.pois.push_back(std::move(p));
    }
    if (ds.pois.empty()) csv.fail("no POI rows");
  }

  {
    CsvReader csv(reports_path);
    csv.expect_header({"poi_id", "interval_index", "reported_count"});
    std::map<std::pair<std::size_t, std::size_t>, double> cells;
    std::size_t max_t = 0;
    std::vector<std::string> row;
    while (csv.next(row)) {
      if (row.size() != 3) csv.fail("expected 3 fields, got " + std::to_string(row.size()));
      const auto it = index.find(row[0]);
      if (it == index.end()) csv.fail("unknown poi_id '" + row[0] + "'");
      const std::size_t t = csv.index(row[1], "interval_index");
      const double x = csv.number(row[2], "reported_count");
      if (x < 0.0) csv.fail("negative reported_count");
      if (!cells.emplace(std::pair{it->second, t}, x).second)
        csv.fail("duplicate report for '" + row[0] + "' interval " + row[1]);
      max_t = std::max(max_t, t);
    }
    if (cells.empty()) csv.fail("no report rows");
    ds.intervals = max_t + 1;
    for (auto& p : ds.pois) p.reports.assign(ds.intervals, -1.0);
    for (const auto& [key, x] : cells) ds.pois[key.first].reports[key.second] = x;
    for (const auto& p : ds.pois)
      for (std::size_t t = 0; t < ds.intervals; ++t)
        if (p.reports[t] < 0.0)
          throw DataError(reports_path.string() + ": no report for '" + p.id + "' interval " + std::to_string(t));
  }

  if (!labels_path.empty()) {
    CsvReader csv(labels_path);
    csv.expect_header({"poi_id", "interval_index", "true_flow"});
    std::vector<double> total(ds.pois.size(), 0.0);
    std::vector<std::size_t> count(ds.pois.size(), 0);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<std::string> row;
    while (csv.next(row)) {
      if (row.size() != 3) csv.fail("expected 3 fields, got " + std::to_string(row.size()));
      const auto it = index.find(row[0]);
      if (it == index.end()) csv.fail("unknown poi_id '" + row[0] + "'");
      const std::size_t t = csv.index(row[1], "interval_index");
      if (t >= ds.intervals) csv.fail("interval_index outside the report window");
      if (!seen.emplace(it->second, t).second) csv.fail("duplicate label for '" + row[0] + "' interval " + row[1]);
      const double y = csv.number(row[2], "true_flow");
      if (y < 0.0) csv.fail("negative true_flow");
      total[it->second] += y;
      ++count[it->second];
    }
    for (std::size_t i = 0; i < ds.pois.size(); ++i)
      if (count[i]) ds.pois[i].label = total[i] / static_cast<double>(count[i]);
  }

  ds.validate();
  sum.pois = ds.pois.size();
  sum.labeled = ds.labeled().size();
  sum.unlabeled = sum.pois - sum.labeled;
  return ds;
}

Dataset load_dataset_dir(const std::filesystem::path& dir, LoadSummary* summary) {
  const auto labels = dir / "labels.csv";
  return load_dataset(dir / "pois.csv", dir / "reports.csv",
                      std::filesystem::exists(labels) ? labels : std::filesystem::path{}, summary);
}

Split split_labeled(std::span<const std::size_t> labeled, double train_fraction, double valid_fraction,
                    std::size_t fold, std::size_t n_folds, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must be in (0, 1)");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw ConfigError("valid fraction must be in (0, 1)");
  if (!(train_fraction + valid_fraction < 1.0)) throw ConfigError("train + valid fractions must leave a test set");
  if (n_folds < 1 || fold >= n_folds) throw ConfigError("fold index must be in [0, n_folds)");

  std::vector<std::size_t> order(labeled.begin(), labeled.end());
  std::sort(order.begin(), order.end());
  const std::size_t n = order.size();
  Rng rng = Rng::derive(seed, kSplit);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::rotate(order.begin(), order.begin() + static_cast<long>(fold * n / n_folds), order.end());

  const auto nv = static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(n)));
  const auto nt = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (nv == 0 || nt == 0 || nv + nt >= n) {
    throw DataError("split of " + std::to_string(n) + " labeled POIs at train " + fmt(train_fraction) + " / valid " +
                    fmt(valid_fraction) + " leaves an empty set");
  }
  Split s;
  s.valid.assign(order.begin(), order.begin() + static_cast<long>(nv));
  s.train.assign(order.begin() + static_cast<long>(nv), order.begin() + static_cast<long>(nv + nt));
  s.test.assign(order.begin() + static_cast<long>(nv + nt), order.end());
  return s;
}

Split split(const Dataset& ds, double train_fraction, double valid_fraction, std::size_t fold, std::size_t n_folds,
            std::uint64_t seed) {
  const auto labeled = ds.labeled();
  return split_labeled(labeled, train_fraction, valid_fraction, fold, n_folds, seed);
}

}  // namespace csst
