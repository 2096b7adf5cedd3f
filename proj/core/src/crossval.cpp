#include "csst/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "csst/error.hpp"
#include "csst/rng.hpp"

namespace csst {

void CrossValidateConfig::validate() const {
  if (fractions.empty()) throw ConfigError("ablate.fractions must not be empty");
  for (double f : fractions)
    if (!(f > 0.0 && f + valid_fraction < 1.0)) throw ConfigError("each fraction must lie in (0, 1 - valid_fraction)");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw ConfigError("ablate.valid_fraction must be in (0, 1)");
  if (folds < 1) throw ConfigError("ablate.folds must be >= 1");
  for (auto f : fold_indices)
    if (f >= folds) throw ConfigError("ablate.fold_indices entries must be < folds");
  if (variants.empty()) throw ConfigError("ablate.variants must not be empty");
  if (pretrained.empty()) throw ConfigError("ablate.pretrained must not be empty");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

std::vector<std::size_t> CrossValidateConfig::folds_to_run() const {
  if (!fold_indices.empty()) return fold_indices;
  std::vector<std::size_t> all(folds);
  for (std::size_t i = 0; i < folds; ++i) all[i] = i;
  return all;
}

std::uint64_t cell_seed(std::uint64_t seed, Variant v, std::size_t fraction_index, std::size_t fold) {
  std::uint64_t h = mix_seed(seed);
  h = mix_seed(h ^ (static_cast<std::uint64_t>(v) + 1));
  h = mix_seed(h ^ (fraction_index + 0x100));
  return mix_seed(h ^ (fold + 0x10000));
}

MetricsReport cross_validate(const Dataset& ds, const AttributedGraph& graph, const FeatureScaler& scaler,
                             const FeatureTable& table, const BackboneConfig& backbone_cfg,
                             const FineTuneConfig& finetune_cfg, const CrossValidateConfig& cfg,
                             const std::map<Variant, ParamStore>& pretrained, std::uint64_t seed,
                             const CellCallback& on_cell) {
  cfg.validate();
  finetune_cfg.validate();
  if (graph.size() != ds.pois.size()) throw ConfigError("graph does not match the dataset");
  for (Variant v : cfg.variants) {
    if (std::find(cfg.pretrained.begin(), cfg.pretrained.end(), true) != cfg.pretrained.end() &&
        !pretrained.contains(v)) {
      throw ConfigError("no pretrained backbone for variant " + to_string(v));
    }
  }
  const auto labeled = ds.labeled();
  MetricsReport report;
  report.dataset = ds.name;
  report.seed = seed;
  report.epsilon = cfg.epsilon;

  std::map<Variant, std::vector<Instance>> instances;
  for (Variant v : cfg.variants) {
    BackboneConfig bc = backbone_cfg;
    bc.variant = v;
    instances.emplace(v, build_instances(graph, bc));
  }

  for (std::size_t fi = 0; fi < cfg.fractions.size(); ++fi) {
    for (Variant v : cfg.variants) {
      BackboneConfig bc = backbone_cfg;
      bc.variant = v;
      for (bool pre : cfg.pretrained) {
        for (std::size_t fold : cfg.folds_to_run()) {
          const Split s = split_labeled(labeled, cfg.fractions[fi], cfg.valid_fraction, fold, cfg.folds, seed);
          const ParamStore* init = pre ? &pretrained.at(v) : nullptr;
          const auto& inst = instances.at(v);
          const FineTuneResult fit =
              finetune(graph, table, scaler, inst, bc, init, s.train, s.valid, finetune_cfg, cell_seed(seed, v, fi, fold));
          GridCell cell;
          cell.variant = v;
          cell.pretrained = pre;
          cell.fraction = cfg.fractions[fi];
          cell.fold = fold;
          cell.metrics = evaluate(fit.model, graph, table, inst, s.test, cfg.epsilon);
          cell.best_epoch = fit.best_epoch;
          if (on_cell) on_cell(cell);
          report.cells.push_back(cell);
        }
      }
    }
  }
  return report;
}

namespace {

nlohmann::json cell_json(const GridCell& c) {
  return {{"variant", to_string(c.variant)},
          {"pretrained", c.pretrained},
          {"fraction", c.fraction},
          {"fold", c.fold},
          {"mape", c.metrics.mape},
          {"acc", c.metrics.acc},
          {"n", c.metrics.n},
          {"excluded_zero_labels", c.metrics.excluded_zero_labels},
          {"best_epoch", c.best_epoch}};
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string metrics_json(const MetricsReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) cells.push_back(cell_json(c));
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : summarize(report)) {
    summary.push_back({{"variant", to_string(s.variant)},
                       {"pretrained", s.pretrained},
                       {"fraction", s.fraction},
                       {"folds", s.folds},
                       {"mean_mape", s.mean_mape},
                       {"mean_acc", s.mean_acc},
                       {"median_acc", s.median_acc}});
  }
  nlohmann::json j = {{"dataset", report.dataset},
                      {"seed", report.seed},
                      {"config_hash", hex(report.config_hash)},
                      {"epsilon", report.epsilon},
                      {"cells", cells},
                      {"summary", summary}};
  return j.dump(2) + "\n";
}

std::string metrics_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "dataset,variant,pretrained,fraction,fold,mape,acc,n,excluded_zero_labels,best_epoch\n";
  char buf[64];
  for (const auto& c : report.cells) {
    os << report.dataset << ',' << to_string(c.variant) << ',' << (c.pretrained ? 1 : 0) << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", c.fraction);
    os << buf << ',' << c.fold << ',';
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g", c.metrics.mape, c.metrics.acc);
    os << buf << ',' << c.metrics.n << ',' << c.metrics.excluded_zero_labels << ',' << c.best_epoch << '\n';
  }
  return os.str();
}

void write_metrics(const MetricsReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw DataError("cannot write " + p.string());
    os << text;
  };
  write(dir / "metrics.json", metrics_json(report));
  write(dir / "metrics.csv", metrics_csv(report));
}

std::vector<CellSummary> summarize(const MetricsReport& report) {
  std::vector<CellSummary> out;
  std::vector<std::vector<double>> accs;
  for (const auto& c : report.cells) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CellSummary& s) {
      return s.variant == c.variant && s.pretrained == c.pretrained && s.fraction == c.fraction;
    });
    if (it == out.end()) {
      out.push_back({c.variant, c.pretrained, c.fraction, 0, 0.0, 0.0, 0.0});
      accs.emplace_back();
      it = out.end() - 1;
    }
    it->folds += 1;
    it->mean_mape += c.metrics.mape;
    it->mean_acc += c.metrics.acc;
    accs[static_cast<std::size_t>(it - out.begin())].push_back(c.metrics.acc);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].mean_mape /= static_cast<double>(out[i].folds);
    out[i].mean_acc /= static_cast<double>(out[i].folds);
    auto& a = accs[i];
    std::sort(a.begin(), a.end());
    const std::size_t m = a.size() / 2;
    out[i].median_acc = a.size() % 2 ? a[m] : 0.5 * (a[m - 1] + a[m]);
  }
  return out;
}

}  // namespace csst
