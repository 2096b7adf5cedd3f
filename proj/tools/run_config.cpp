#include "run_config.hpp"

#include <cstdio>
#include <fstream>

#include "csst/checkpoint.hpp"
#include "csst/error.hpp"

namespace csst::cli {

namespace {

using nlohmann::json;

bool compatible(const json& base, const json& v) {
  if (base.is_number_unsigned()) return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
  if (base.is_number()) return v.is_number();
  if (base.is_boolean()) return v.is_boolean();
  if (base.is_string()) return v.is_string();
  if (base.is_array()) {
    if (!v.is_array()) return false;
    if (base.empty()) return true;
    for (const auto& e : v)
      if (!compatible(base.front(), e)) return false;
    return true;
  }
  return false;
}

const char* type_name(const json& v) {
  if (v.is_number_unsigned()) return "a non-negative integer";
  if (v.is_number()) return "a number";
  if (v.is_boolean()) return "a boolean";
  if (v.is_string()) return "a string";
  if (v.is_array()) return "an array";
  return "an object";
}

std::vector<std::string> variant_names(const std::vector<Variant>& vs) {
  std::vector<std::string> out;
  for (Variant v : vs) out.push_back(to_string(v));
  return out;
}

}  // namespace

void RunConfig::validate() const {
  synth.validate();
  {
    // Input widths come from the dataset; check the rest now.
    BackboneConfig b = backbone;
    b.attr_dim = b.portrait_dim = b.report_dim = 1;
    b.validate();
  }
  pretrain.validate();
  finetune.validate();
  ablate.validate();
  if (graph.cutoff_m <= 0.0) throw ConfigError("graph.cutoff_m must be positive");
  if (!(split.train_fraction > 0.0 && split.valid_fraction > 0.0 &&
        split.train_fraction + split.valid_fraction < 1.0))
    throw ConfigError("split fractions must be positive and leave a test remainder");
  if (split.folds < 1 || split.fold >= split.folds) throw ConfigError("split.fold must be < split.folds");
  const auto& s = evaluate.split;
  if (s != "train" && s != "valid" && s != "test" && s != "labeled")
    throw ConfigError("evaluate.split must be train, valid, test or labeled");
  if (!(evaluate.epsilon > 0.0)) throw ConfigError("evaluate.epsilon must be positive");
  if (!data.pois.empty() && data.reports.empty())
    throw ConfigError("data.reports is required with data.pois");
}

json to_json(const RunConfig& c) {
  const SynthConfig& s = c.synth;
  const BackboneConfig& b = c.backbone;
  const PretrainConfig& p = c.pretrain;
  const FineTuneConfig& f = c.finetune;
  const CrossValidateConfig& a = c.ablate;
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"data", {{"dir", c.data.dir}, {"pois", c.data.pois}, {"reports", c.data.reports}, {"labels", c.data.labels}}},
      {"synth",
       {{"n_pois", s.n_pois},
        {"n_labeled", s.n_labeled},
        {"extent_km", s.extent_km},
        {"center_lon", s.center_lon},
        {"center_lat", s.center_lat},
        {"intervals", s.intervals},
        {"age_groups", s.age_groups},
        {"gender_groups", s.gender_groups},
        {"young_band", s.young_band},
        {"loc_features", s.loc_features},
        {"traffic_levels", s.traffic_levels},
        {"k", s.k},
        {"cutoff_m", s.cutoff_m},
        {"sigma_m", s.sigma_m},
        {"area_log_mean", s.area_log_mean},
        {"area_log_sd", s.area_log_sd},
        {"w0", s.w0},
        {"w_area", s.w_area},
        {"w_portrait", s.w_portrait},
        {"w_traffic", s.w_traffic},
        {"w_neighbor", s.w_neighbor},
        {"noise_sd", s.noise_sd},
        {"flow_scale", s.flow_scale},
        {"ratio_a", s.ratio_a},
        {"ratio_b", s.ratio_b},
        {"seasonal_amplitude", s.seasonal_amplitude},
        {"report_noise_sd", s.report_noise_sd},
        {"seed", s.seed}}},
      {"graph", {{"k", c.graph.k}, {"cutoff_m", c.graph.cutoff_m}}},
      {"backbone",
       {{"variant", to_string(b.variant)},
        {"hidden", b.hidden},
        {"mlp_layers", b.mlp_layers},
        {"conv_layers", b.conv_layers},
        {"sigma_m", b.sigma_m},
        {"hops", b.hops},
        {"max_neighbors", b.max_neighbors}}},
      {"pretrain",
       {{"positives", p.positives},
        {"prototypes", p.prototypes},
        {"prototype_dim", p.prototype_dim},
        {"projection_layers", p.projection_layers},
        {"center_embeddings", p.center_embeddings},
        {"temperature", p.temperature},
        {"sinkhorn_temperature", p.sinkhorn_temperature},
        {"batch_size", p.batch_size},
        {"max_steps", p.max_steps},
        {"sinkhorn_iterations", p.sinkhorn_iterations},
        {"optimizer", to_string(p.optimizer)},
        {"learning_rate", p.learning_rate},
        {"weight_decay", p.weight_decay},
        {"resample_positives", p.resample_positives},
        {"plateau_window", p.plateau_window},
        {"plateau_patience", p.plateau_patience},
        {"plateau_tolerance", p.plateau_tolerance},
        {"n_bins_area", p.n_bins_area},
        {"n_bins_report", p.n_bins_report}}},
      {"finetune",
       {{"optimizer", to_string(f.optimizer)},
        {"learning_rate", f.learning_rate},
        {"lr_divisor", f.lr_divisor},
        {"scratch_lr_divisor", f.scratch_lr_divisor},
        {"weight_decay", f.weight_decay},
        {"batch_size", f.batch_size},
        {"max_epochs", f.max_epochs}}},
      {"split",
       {{"train_fraction", c.split.train_fraction},
        {"valid_fraction", c.split.valid_fraction},
        {"fold", c.split.fold},
        {"folds", c.split.folds}}},
      {"evaluate", {{"split", c.evaluate.split}, {"epsilon", c.evaluate.epsilon}}},
      {"ablate",
       {{"fractions", a.fractions},
        {"valid_fraction", a.valid_fraction},
        {"folds", a.folds},
        {"fold_indices", a.fold_indices},
        {"variants", variant_names(a.variants)},
        {"pretrained", a.pretrained},
        {"epsilon", a.epsilon}}},
  };
}

void merge_checked(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError((where.empty() ? "config" : where) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, value, path);
    } else if (!compatible(slot, value)) {
      throw ConfigError("config key '" + path + "' must be " + type_name(slot));
    } else {
      slot = value;
    }
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest.erase(0, pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override key '" + key + "' has an empty component");
    patch = json{{*it, patch}};
  }
  merge_checked(j, patch);
}

RunConfig from_json(const json& patch) {
  json j = to_json(RunConfig{});
  merge_checked(j, patch);
  RunConfig c;
  try {
    c.seed = j["seed"].get<std::uint64_t>();
    c.output_dir = j["output_dir"].get<std::string>();
    const json& d = j["data"];
    c.data = {d["dir"].get<std::string>(), d["pois"].get<std::string>(), d["reports"].get<std::string>(),
              d["labels"].get<std::string>()};

    const json& s = j["synth"];
    SynthConfig& sc = c.synth;
    sc.n_pois = s["n_pois"];
    sc.n_labeled = s["n_labeled"];
    sc.extent_km = s["extent_km"];
    sc.center_lon = s["center_lon"];
    sc.center_lat = s["center_lat"];
    sc.intervals = s["intervals"];
    sc.age_groups = s["age_groups"];
    sc.gender_groups = s["gender_groups"];
    sc.young_band = s["young_band"];
    sc.loc_features = s["loc_features"];
    sc.traffic_levels = s["traffic_levels"];
    sc.k = s["k"];
    sc.cutoff_m = s["cutoff_m"];
    sc.sigma_m = s["sigma_m"];
    sc.area_log_mean = s["area_log_mean"];
    sc.area_log_sd = s["area_log_sd"];
    sc.w0 = s["w0"];
    sc.w_area = s["w_area"];
    sc.w_portrait = s["w_portrait"];
    sc.w_traffic = s["w_traffic"];
    sc.w_neighbor = s["w_neighbor"];
    sc.noise_sd = s["noise_sd"];
    sc.flow_scale = s["flow_scale"];
    sc.ratio_a = s["ratio_a"];
    sc.ratio_b = s["ratio_b"];
    sc.seasonal_amplitude = s["seasonal_amplitude"];
    sc.report_noise_sd = s["report_noise_sd"];
    sc.seed = s["seed"];

    c.graph.k = j["graph"]["k"];
    c.graph.cutoff_m = j["graph"]["cutoff_m"];

    const json& b = j["backbone"];
    c.backbone.variant = parse_variant(b["variant"].get<std::string>());
    c.backbone.hidden = b["hidden"];
    c.backbone.mlp_layers = b["mlp_layers"];
    c.backbone.conv_layers = b["conv_layers"];
    c.backbone.sigma_m = b["sigma_m"];
    c.backbone.hops = b["hops"];
    c.backbone.max_neighbors = b["max_neighbors"];

    const json& p = j["pretrain"];
    PretrainConfig& pc = c.pretrain;
    pc.positives = p["positives"];
    pc.prototypes = p["prototypes"];
    pc.prototype_dim = p["prototype_dim"];
    pc.projection_layers = p["projection_layers"];
    pc.center_embeddings = p["center_embeddings"];
    pc.temperature = p["temperature"];
    pc.sinkhorn_temperature = p["sinkhorn_temperature"];
    pc.batch_size = p["batch_size"];
    pc.max_steps = p["max_steps"];
    pc.sinkhorn_iterations = p["sinkhorn_iterations"];
    pc.optimizer = parse_optimizer_kind(p["optimizer"].get<std::string>());
    pc.learning_rate = p["learning_rate"];
    pc.weight_decay = p["weight_decay"];
    pc.resample_positives = p["resample_positives"];
    pc.plateau_window = p["plateau_window"];
    pc.plateau_patience = p["plateau_patience"];
    pc.plateau_tolerance = p["plateau_tolerance"];
    pc.n_bins_area = p["n_bins_area"];
    pc.n_bins_report = p["n_bins_report"];

    const json& f = j["finetune"];
    c.finetune.optimizer = parse_optimizer_kind(f["optimizer"].get<std::string>());
    c.finetune.learning_rate = f["learning_rate"];
    c.finetune.lr_divisor = f["lr_divisor"];
    c.finetune.scratch_lr_divisor = f["scratch_lr_divisor"];
    c.finetune.weight_decay = f["weight_decay"];
    c.finetune.batch_size = f["batch_size"];
    c.finetune.max_epochs = f["max_epochs"];

    const json& sp = j["split"];
    c.split = {sp["train_fraction"], sp["valid_fraction"], sp["fold"], sp["folds"]};
    c.evaluate = {j["evaluate"]["split"].get<std::string>(), j["evaluate"]["epsilon"]};

    const json& a = j["ablate"];
    CrossValidateConfig& ac = c.ablate;
    ac.fractions = a["fractions"].get<std::vector<double>>();
    ac.valid_fraction = a["valid_fraction"];
    ac.folds = a["folds"];
    ac.fold_indices = a["fold_indices"].get<std::vector<std::size_t>>();
    ac.variants.clear();
    for (const auto& v : a["variants"]) ac.variants.push_back(parse_variant(v.get<std::string>()));
    ac.pretrained = a["pretrained"].get<std::vector<bool>>();
    ac.epsilon = a["epsilon"];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig resolve(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json j = to_json(RunConfig{});
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file " + file.string());
    json patch = json::parse(in, nullptr, false);
    if (patch.is_discarded()) throw ConfigError(file.string() + ": not valid JSON");
    merge_checked(j, patch);
  }
  for (const auto& o : overrides) apply_override(j, o);
  RunConfig c = from_json(j);
  c.validate();
  return c;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output_dir");
  return fnv1a64(j.dump());
}

std::uint64_t lineage_hash(const RunConfig& cfg, Variant variant) {
  json j = to_json(cfg);
  json b = j["backbone"];
  b["variant"] = to_string(variant);
  const json lineage = {{"data", j["data"]}, {"synth", j["synth"]}, {"graph", j["graph"]}, {"backbone", b}};
  return fnv1a64(lineage.dump());
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace csst::cli
