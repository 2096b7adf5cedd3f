// csst: generate, pretrain, finetune, evaluate and ablate from one binary.
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "csst/augment.hpp"
#include "csst/checkpoint.hpp"
#include "csst/contrastive.hpp"
#include "csst/crossval.hpp"
#include "csst/dataset.hpp"
#include "csst/error.hpp"
#include "csst/finetune.hpp"
#include "run_config.hpp"

#ifndef CSST_VERSION
#define CSST_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace csst;
using namespace csst::cli;

namespace {

bool g_quiet = false;

void note(const char* fmt, auto... args) {
  if (g_quiet) return;
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

void warn(const std::string& msg) { std::fprintf(stderr, "warning: %s\n", msg.c_str()); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

std::string timestamp(const char* fmt) {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  localtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), fmt, &tm);
  return buf;
}

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out;
  std::string checkpoint;
  std::vector<std::string> checkpoints;  // ablate: variant=path
  std::string model;
  bool allow_mismatch = false;
};

// Resolved config, run directory and the inputs read so far.
struct Run {
  std::string command;
  RunConfig cfg;
  std::uint64_t hash = 0;
  fs::path dir;
  json inputs = json::object();
  std::vector<std::string> overrides;

  void record_input(const fs::path& p) { inputs[p.string()] = hex64(fnv1a64(read_file(p))); }

  void write_manifest() const {
    write_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
    const json manifest = {{"command", command},
                           {"version", CSST_VERSION},
                           {"seed", cfg.seed},
                           {"config_hash", hex64(hash)},
                           {"overrides", overrides},
                           {"inputs", inputs},
                           {"created", timestamp("%Y-%m-%dT%H:%M:%S")}};
    write_file(dir / "run.json", manifest.dump(2) + "\n");
  }
};

fs::path make_run_dir(const std::string& command, const std::string& flag_out, const RunConfig& cfg) {
  fs::path dir;
  if (!flag_out.empty()) {
    dir = flag_out;
  } else if (!cfg.output_dir.empty()) {
    dir = cfg.output_dir;
  } else {
    const char* root = std::getenv("CSST_OUTPUT_ROOT");
    const fs::path base = fs::path(root && *root ? root : "runs") / (command + "-" + timestamp("%Y%m%d-%H%M%S"));
    dir = base;
    for (int i = 1; fs::exists(dir); ++i) dir = base.string() + "-" + std::to_string(i);
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

Run start(const std::string& command, const Options& opt) {
  Run run;
  run.command = command;
  run.overrides = opt.overrides;
  run.cfg = resolve(opt.config_file, opt.overrides);
  run.hash = config_hash(run.cfg);
  run.dir = make_run_dir(command, opt.out, run.cfg);
  if (!opt.config_file.empty()) run.record_input(opt.config_file);
  return run;
}

Dataset load_data(Run& run) {
  const DataSource& src = run.cfg.data;
  if (src.synthetic()) {
    note("generating synthetic city (%zu POIs, seed %llu)", run.cfg.synth.n_pois,
         static_cast<unsigned long long>(run.cfg.synth.seed));
    return generate_synthetic(run.cfg.synth);
  }
  const fs::path dir = src.dir;
  const fs::path pois = src.pois.empty() ? dir / "pois.csv" : fs::path(src.pois);
  const fs::path reports = src.reports.empty() ? dir / "reports.csv" : fs::path(src.reports);
  fs::path labels = src.labels.empty() ? dir / "labels.csv" : fs::path(src.labels);
  if (src.labels.empty() && !fs::exists(labels)) labels.clear();
  LoadSummary summary;
  Dataset ds = load_dataset(pois, reports, labels, &summary);
  run.record_input(pois);
  run.record_input(reports);
  if (!labels.empty()) run.record_input(labels);
  for (const auto& w : summary.warnings) warn(w);
  note("loaded %zu POIs (%zu labeled, %zu unlabeled)", summary.pois, summary.labeled, summary.unlabeled);
  return ds;
}

// Graph, feature table and backbone config derived from a dataset.
struct Pipeline {
  Dataset ds;
  AttributedGraph graph;
  FeatureScaler scaler;
  FeatureTable table;
  BackboneConfig backbone;
};

Pipeline prepare(Run& run) {
  Pipeline p;
  p.ds = load_data(run);
  p.graph = build_graph(p.ds.pois, run.cfg.graph.k, run.cfg.graph.cutoff_m);
  p.scaler = FeatureScaler::fit(p.ds.pois);
  p.table = FeatureTable::build(p.graph, p.scaler);
  p.backbone = run.cfg.backbone;
  p.backbone.attr_dim = p.ds.pois.front().attributes.size();
  p.backbone.portrait_dim = p.ds.layout.size();
  p.backbone.report_dim = p.ds.intervals;
  p.backbone.validate();
  return p;
}

void log_step(const LossRecord& r) {
  if (r.step % 10 == 0) note("  step %4zu  loss %.5f  (%.1f s)", r.step, r.loss, r.wall_ms / 1000.0);
}

PretrainResult run_pretrain(const Pipeline& p, const RunConfig& cfg, const BackboneConfig& bc) {
  const AugmentationIndex index = build_index(p.ds.pois, cfg.pretrain.n_bins_area, cfg.pretrain.n_bins_report);
  note("pretraining %s for up to %zu steps", to_string(bc.variant).c_str(), cfg.pretrain.max_steps);
  PretrainResult r = pretrain(p.graph, p.table, index, bc, cfg.pretrain, cfg.seed, log_step);
  if (r.fallback_draws) note("  %zu anchors drew positives from the area-bin fallback", r.fallback_draws);
  if (r.unaugmentable) note("  %zu anchors had no positive and were skipped", r.unaugmentable);
  return r;
}

json pretrain_summary(const PretrainResult& r) {
  return {{"steps", r.steps},
          {"initial_loss", r.losses.empty() ? 0.0 : r.losses.front().loss},
          {"final_loss", r.losses.empty() ? 0.0 : r.losses.back().loss},
          {"fallback_draws", r.fallback_draws},
          {"unaugmentable", r.unaugmentable},
          {"early_stopped", r.early_stopped}};
}

// Loads a pretrained backbone and checks it against the current config.
PretrainedBackbone load_checked(const std::string& path, const RunConfig& cfg, const BackboneConfig& bc,
                                bool allow_mismatch) {
  std::uint64_t stored = 0;
  PretrainedBackbone pb = load_pretrained(path, &stored);
  if (!(pb.backbone_cfg == bc))
    throw ConfigError(path + ": checkpoint backbone (" + to_string(pb.backbone_cfg.variant) +
                      ") does not match the configured backbone");
  const std::uint64_t expected = lineage_hash(cfg, bc.variant);
  if (stored != expected) {
    warn(path + ": checkpoint hash " + hex64(stored) + " differs from config hash " + hex64(expected));
    if (!allow_mismatch) throw ConfigError("checkpoint/config hash mismatch; pass --allow-hash-mismatch to proceed");
  }
  return pb;
}

json metrics_json(const Metrics& m) {
  return {{"mape", m.mape}, {"acc", m.acc}, {"n", m.n}, {"excluded_zero_labels", m.excluded_zero_labels}};
}

std::vector<std::size_t> split_nodes(const Split& s, const std::string& which, const Dataset& ds) {
  if (which == "train") return s.train;
  if (which == "valid") return s.valid;
  if (which == "test") return s.test;
  return ds.labeled();
}

int cmd_generate(const Options& opt) {
  Run run = start("generate", opt);
  if (!run.cfg.data.synthetic()) throw ConfigError("generate writes the synthetic city; clear the data section");
  const Dataset ds = load_data(run);
  save_dataset(ds, run.dir);
  const json summary = {{"pois", ds.pois.size()},
                        {"labeled", ds.labeled().size()},
                        {"intervals", ds.intervals},
                        {"median_report_ratio", median_report_ratio(ds)}};
  write_file(run.dir / "summary.json", summary.dump(2) + "\n");
  run.write_manifest();
  note("wrote %zu POIs to %s (median report ratio %.4f)", ds.pois.size(), run.dir.c_str(), median_report_ratio(ds));
  return 0;
}

int cmd_pretrain(const Options& opt) {
  Run run = start("pretrain", opt);
  const Pipeline p = prepare(run);
  const PretrainResult r = run_pretrain(p, run.cfg, p.backbone);
  save_pretrained((run.dir / "pretrain.ckpt").string(), {p.backbone, r.backbone, r.bank, r.steps},
                  lineage_hash(run.cfg, p.backbone.variant));
  write_loss_log((run.dir / "loss.csv").string(), r.losses);
  write_file(run.dir / "pretrain.json", pretrain_summary(r).dump(2) + "\n");
  run.write_manifest();
  note("checkpoint: %s", (run.dir / "pretrain.ckpt").c_str());
  return 0;
}

int cmd_finetune(const Options& opt) {
  Run run = start("finetune", opt);
  const Pipeline p = prepare(run);
  const RunConfig& cfg = run.cfg;
  std::optional<PretrainedBackbone> pb;
  if (!opt.checkpoint.empty()) {
    pb = load_checked(opt.checkpoint, cfg, p.backbone, opt.allow_mismatch);
    run.record_input(opt.checkpoint);
  }
  const Split s = split(p.ds, cfg.split.train_fraction, cfg.split.valid_fraction, cfg.split.fold, cfg.split.folds,
                        cfg.seed);
  const auto instances = build_instances(p.graph, p.backbone);
  note("fine-tuning %s %s on %zu labels (%zu valid, %zu test)", to_string(p.backbone.variant).c_str(),
       pb ? "from the checkpoint" : "from scratch", s.train.size(), s.valid.size(), s.test.size());
  const FineTuneResult fit = finetune(p.graph, p.table, p.scaler, instances, p.backbone,
                                      pb ? &pb->backbone : nullptr, s.train, s.valid, cfg.finetune, cfg.seed);
  const Metrics test = evaluate(fit.model, p.graph, p.table, instances, s.test, cfg.evaluate.epsilon);
  const Metrics valid = evaluate(fit.model, p.graph, p.table, instances, s.valid, cfg.evaluate.epsilon);

  save_model((run.dir / "model.ckpt").string(), fit.model, lineage_hash(cfg, p.backbone.variant));
  std::string hist = "epoch,train_bce,valid_mape\n";
  char buf[96];
  for (const auto& e : fit.history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e.epoch, e.train_bce, e.valid_mape);
    hist += buf;
  }
  write_file(run.dir / "history.csv", hist);
  const json metrics = {{"variant", to_string(p.backbone.variant)},
                        {"pretrained", pb.has_value()},
                        {"train", s.train.size()},
                        {"best_epoch", fit.best_epoch},
                        {"epsilon", cfg.evaluate.epsilon},
                        {"valid", metrics_json(valid)},
                        {"test", metrics_json(test)},
                        {"config_hash", hex64(run.hash)}};
  write_file(run.dir / "metrics.json", metrics.dump(2) + "\n");
  run.write_manifest();
  note("test MAPE %.4f  ACC %.4f  (best epoch %zu)", test.mape, test.acc, fit.best_epoch);
  return 0;
}

int cmd_evaluate(const Options& opt) {
  Run run = start("evaluate", opt);
  const Pipeline p = prepare(run);
  const RunConfig& cfg = run.cfg;
  std::uint64_t stored = 0;
  const Model model = load_model(opt.model, &stored);
  run.record_input(opt.model);
  const std::uint64_t expected = lineage_hash(cfg, model.backbone_cfg.variant);
  if (stored != expected) {
    warn(opt.model + ": model hash " + hex64(stored) + " differs from config hash " + hex64(expected));
    if (!opt.allow_mismatch) throw ConfigError("model/config hash mismatch; pass --allow-hash-mismatch to proceed");
  }
  const FeatureTable table = FeatureTable::build(p.graph, model.features);
  const auto instances = build_instances(p.graph, model.backbone_cfg);
  const Split s = split(p.ds, cfg.split.train_fraction, cfg.split.valid_fraction, cfg.split.fold, cfg.split.folds,
                        cfg.seed);
  const auto nodes = split_nodes(s, cfg.evaluate.split, p.ds);
  const auto yhat = predict(model, table, instances, nodes);
  const auto y = labels_of(p.graph, nodes);
  const Metrics m = evaluate_predictions(y, yhat, cfg.evaluate.epsilon);

  std::string pred = "poi_id,true_flow,predicted_flow\n";
  char buf[96];
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", y[i], yhat[i]);
    pred += p.graph.node(nodes[i]).id + buf;
  }
  write_file(run.dir / "predictions.csv", pred);
  json metrics = metrics_json(m);
  metrics["split"] = cfg.evaluate.split;
  metrics["epsilon"] = cfg.evaluate.epsilon;
  metrics["variant"] = to_string(model.backbone_cfg.variant);
  metrics["config_hash"] = hex64(run.hash);
  write_file(run.dir / "metrics.json", metrics.dump(2) + "\n");
  run.write_manifest();
  note("%s split: MAPE %.4f  ACC %.4f  over %zu POIs", cfg.evaluate.split.c_str(), m.mape, m.acc, m.n);
  return 0;
}

int cmd_ablate(const Options& opt) {
  Run run = start("ablate", opt);
  const Pipeline p = prepare(run);
  const RunConfig& cfg = run.cfg;
  std::map<Variant, std::string> given;
  for (const auto& spec : opt.checkpoints) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--checkpoint for ablate takes variant=path");
    given[parse_variant(spec.substr(0, eq))] = spec.substr(eq + 1);
  }

  std::map<Variant, ParamStore> pretrained;
  const bool need = std::find(cfg.ablate.pretrained.begin(), cfg.ablate.pretrained.end(), true) !=
                    cfg.ablate.pretrained.end();
  json pretrain_info = json::object();
  for (Variant v : cfg.ablate.variants) {
    if (!need) break;
    BackboneConfig bc = p.backbone;
    bc.variant = v;
    const std::string name = to_string(v);
    if (given.contains(v)) {
      pretrained[v] = load_checked(given[v], cfg, bc, opt.allow_mismatch).backbone;
      run.record_input(given[v]);
      continue;
    }
    const PretrainResult r = run_pretrain(p, cfg, bc);
    save_pretrained((run.dir / ("pretrain-" + name + ".ckpt")).string(), {bc, r.backbone, r.bank, r.steps},
                    lineage_hash(cfg, v));
    write_loss_log((run.dir / ("loss-" + name + ".csv")).string(), r.losses);
    pretrain_info[name] = pretrain_summary(r);
    pretrained[v] = r.backbone;
  }
  if (!pretrain_info.empty()) write_file(run.dir / "pretrain.json", pretrain_info.dump(2) + "\n");

  MetricsReport report = cross_validate(p.ds, p.graph, p.scaler, p.table, p.backbone, cfg.finetune, cfg.ablate,
                                        pretrained, cfg.seed, [](const GridCell& c) {
                                          note("  %-6s %-10s f=%.2f fold %zu  MAPE %.4f  ACC %.4f",
                                               to_string(c.variant).c_str(), c.pretrained ? "pretrained" : "scratch",
                                               c.fraction, c.fold, c.metrics.mape, c.metrics.acc);
                                        });
  report.config_hash = run.hash;
  write_metrics(report, run.dir);
  run.write_manifest();
  note("wrote %zu cells to %s", report.cells.size(), (run.dir / "metrics.json").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates many short-lived matrices of the same sizes; keep them
  // on the heap instead of fresh mmap pages.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"Contrastive self-supervised crowd-flow inference for POIs"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", CSST_VERSION);

  Options opt;
  std::string seed, data;
  app.add_option("-c,--config", opt.config_file, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--set", opt.overrides, "Override a config value, section.key=value (repeatable)");
  app.add_option("-o,--out", opt.out, "Output directory (default: $CSST_OUTPUT_ROOT/<command>-<time>)");
  app.add_option("--seed", seed, "Global seed (same as --set seed=N)");
  app.add_option("--data", data, "Dataset directory with pois.csv, reports.csv, labels.csv");
  app.add_flag("-q,--quiet", g_quiet, "Only print warnings and errors");

  auto* gen = app.add_subcommand("generate", "Write the synthetic city as CSV files");
  auto* pre = app.add_subcommand("pretrain", "Contrastive pretraining of one backbone");
  auto* fin = app.add_subcommand("finetune", "Fine-tune a backbone and regression head on labeled POIs");
  fin->add_option("--checkpoint", opt.checkpoint, "Pretrained backbone; omit to train from scratch");
  fin->add_flag("--allow-hash-mismatch", opt.allow_mismatch, "Use a checkpoint built under a different config");
  auto* eva = app.add_subcommand("evaluate", "Score a fine-tuned model on a split");
  eva->add_option("--model", opt.model, "Model checkpoint written by finetune")->required();
  eva->add_flag("--allow-hash-mismatch", opt.allow_mismatch, "Use a model built under a different config");
  auto* abl = app.add_subcommand("ablate", "Cross-validate {variants} x {scratch, pretrained} x fractions");
  abl->add_option("--checkpoint", opt.checkpoints, "Reuse a pretrained backbone, variant=path (repeatable)");
  abl->add_flag("--allow-hash-mismatch", opt.allow_mismatch, "Use checkpoints built under a different config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (!seed.empty()) opt.overrides.insert(opt.overrides.begin(), "seed=" + seed);
  if (!data.empty()) opt.overrides.insert(opt.overrides.begin(), "data.dir=" + json(data).dump());

  try {
    if (gen->parsed()) return cmd_generate(opt);
    if (pre->parsed()) return cmd_pretrain(opt);
    if (fin->parsed()) return cmd_finetune(opt);
    if (eva->parsed()) return cmd_evaluate(opt);
    if (abl->parsed()) return cmd_ablate(opt);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
