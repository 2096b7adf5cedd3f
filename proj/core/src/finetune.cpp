#include "csst/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "csst/checkpoint.hpp"
#include "csst/error.hpp"
#include "csst/rng.hpp"
#include "metadata.hpp"

namespace csst {

using ad::Tape;
using ad::Var;

namespace {

enum Stream : std::uint64_t { kBackboneInit = 11, kHeadInit = 12, kShuffle = 13 };

constexpr std::size_t kPredictChunk = 4096;

}  // namespace

TargetScaler::TargetScaler(double scale) : scale_(scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DataError("target scale must be positive and finite");
}

double TargetScaler::forward(double y) const { return std::clamp(y / scale_, kLow, kHigh); }

TargetScaler normalize_targets(std::span<const double> train_labels) {
  double hi = 0.0;
  for (double y : train_labels) {
    if (!std::isfinite(y)) throw DataError("non-finite training label");
    hi = std::max(hi, y);
  }
  if (!(hi > 0.0)) throw DataError("normalize_targets needs at least one positive training label");
  return TargetScaler(TargetScaler::kHeadroom * hi);
}

void FineTuneConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("finetune.learning_rate must be finite and non-negative");
  if (!(lr_divisor >= 1.0)) throw ConfigError("finetune.lr_divisor (eta) must be >= 1");
  if (!(scratch_lr_divisor >= 1.0)) throw ConfigError("finetune.scratch_lr_divisor must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("finetune.weight_decay must be non-negative");
  if (batch_size < 1) throw ConfigError("finetune.batch_size must be >= 1");
}

std::vector<Instance> build_instances(const AttributedGraph& graph, const BackboneConfig& cfg) {
  const std::size_t hops = cfg.variant == Variant::Stgnn ? cfg.hops : 0;
  std::vector<Instance> out;
  out.reserve(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) out.push_back(khop_subgraph(graph, i, hops, cfg.max_neighbors));
  return out;
}

Var bce_loss(Tape& tape, Var logits, std::span<const double> targets) {
  if (logits.cols() != 1 || logits.rows() != targets.size()) throw ConfigError("bce_loss: one target per logit required");
  Tensor t = Tensor::matrix(targets.size(), 1);
  Tensor u = Tensor::matrix(targets.size(), 1);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!(targets[i] >= 0.0 && targets[i] <= 1.0)) throw DataError("bce_loss targets must lie in [0, 1]");
    t[i] = targets[i];
    u[i] = 1.0 - targets[i];
  }
  Var pos = ad::mul(tape.constant(std::move(t)), ad::log_sigmoid(logits));
  Var neg = ad::mul(tape.constant(std::move(u)), ad::log_sigmoid(ad::scale(logits, -1.0)));
  return ad::scale(ad::sum(ad::add(pos, neg)), -1.0 / static_cast<double>(targets.size()));
}

std::vector<double> labels_of(const AttributedGraph& graph, std::span<const std::size_t> nodes) {
  std::vector<double> y;
  y.reserve(nodes.size());
  for (auto i : nodes) {
    const Poi& p = graph.node(i);
    if (!p.label) throw DataError("POI '" + p.id + "' has no label");
    y.push_back(*p.label);
  }
  return y;
}

namespace {

std::vector<Instance> gather(std::span<const Instance> instances, std::span<const std::size_t> nodes) {
  std::vector<Instance> out;
  out.reserve(nodes.size());
  for (auto i : nodes) {
    if (i >= instances.size()) throw DataError("node index outside the instance table");
    out.push_back(instances[i]);
  }
  return out;
}

std::vector<double> predict_with(const ParamStore& backbone, const ParamStore& head, const BackboneConfig& cfg,
                                 const TargetScaler& target, const FeatureTable& table,
                                 std::span<const Instance> instances, std::span<const std::size_t> nodes) {
  std::vector<double> out;
  out.reserve(nodes.size());
  for (std::size_t lo = 0; lo < nodes.size(); lo += kPredictChunk) {
    const auto chunk = nodes.subspan(lo, std::min(kPredictChunk, nodes.size() - lo));
    const auto batch = gather(instances, chunk);
    Tape tape;
    Var z = ad::sigmoid(head_logits(tape, head, backbone_forward(tape, backbone, cfg, table, batch)));
    for (double v : z.value().data()) out.push_back(target.inverse(v));
  }
  return out;
}

// Pretrained parameters must cover exactly the backbone's names and shapes.
void check_compatible(const ParamStore& given, const ParamStore& expected) {
  if (given.names() != expected.names())
    throw ConfigError("pretrained backbone does not match the backbone configuration");
  for (const auto& [name, t] : expected) {
    const Tensor& g = given.at(name);
    if (g.rows() != t.rows() || g.cols() != t.cols())
      throw ConfigError("pretrained parameter " + name + " has the wrong shape");
  }
}

}  // namespace

FineTuneResult finetune(const AttributedGraph& graph, const FeatureTable& table, const FeatureScaler& scaler,
                        std::span<const Instance> instances, const BackboneConfig& backbone_cfg,
                        const ParamStore* init, std::span<const std::size_t> train,
                        std::span<const std::size_t> valid, const FineTuneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  backbone_cfg.validate();
  if (train.empty()) throw DataError("finetune: empty training split");
  if (valid.empty()) throw DataError("finetune: empty validation split");

  const std::vector<double> y_train = labels_of(graph, train);
  const std::vector<double> y_valid = labels_of(graph, valid);

  FineTuneResult result;
  Model& model = result.model;
  model.backbone_cfg = backbone_cfg;
  model.features = scaler;
  model.target = normalize_targets(y_train);
  {
    Rng rng = Rng::derive(seed, kBackboneInit);
    model.backbone = init_backbone(backbone_cfg, rng);
  }
  if (init) {
    check_compatible(*init, model.backbone);
    model.backbone = *init;
  }
  {
    Rng rng = Rng::derive(seed, kHeadInit);
    model.head = init_head(backbone_cfg, rng);
  }

  std::vector<double> t_train(y_train.size());
  for (std::size_t i = 0; i < y_train.size(); ++i) t_train[i] = model.target.forward(y_train[i]);

  OptimizerConfig opt;
  opt.kind = cfg.optimizer;
  opt.learning_rate = cfg.learning_rate;
  opt.weight_decay = cfg.weight_decay;
  const double eta = init ? cfg.lr_divisor : cfg.scratch_lr_divisor;
  opt.lr_divisor = eta;
  GroupDivisors divisors;
  for (const auto& g : backbone_groups(backbone_cfg.variant)) divisors.set(g, eta);
  Optimizer optimizer(opt, divisors);
  // With a zero backbone rate only the head is stepped, so the backbone
  // stays bit-identical.
  const bool frozen = cfg.learning_rate / eta == 0.0;

  ParamStore params = model.backbone;
  params.merge(model.head);

  auto valid_mape = [&](const ParamStore& p) {
    const auto yhat = predict_with(p, p, backbone_cfg, model.target, table, instances, valid);
    return evaluate_predictions(y_valid, yhat).mape;
  };

  double best = valid_mape(params);
  result.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), best});
  ParamStore best_params = params;

  Rng rng = Rng::derive(seed, kShuffle);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::vector<Instance> batch;
      std::vector<double> targets;
      for (std::size_t k = lo; k < hi; ++k) {
        batch.push_back(instances[train[order[k]]]);
        targets.push_back(t_train[order[k]]);
      }
      Tape tape;
      Var emb = backbone_forward(tape, params, backbone_cfg, table, batch);
      Var loss = bce_loss(tape, head_logits(tape, params, emb), targets);
      total += loss.value().item() * static_cast<double>(hi - lo);
      GradStore grads = tape.grad(loss, frozen ? params.with_prefix(groups::kHead) : params);
      optimizer.step(params, grads);
    }
    const double v = valid_mape(params);
    result.history.push_back({epoch, total / static_cast<double>(order.size()), v});
    if (v < best) {
      best = v;
      best_params = params;
      result.best_epoch = epoch;
    }
  }
  model.head = best_params.with_prefix(groups::kHead);
  model.backbone = best_params.without_prefix(groups::kHead);
  return result;
}

std::vector<double> predict(const Model& model, const FeatureTable& table, std::span<const Instance> instances,
                            std::span<const std::size_t> nodes) {
  return predict_with(model.backbone, model.head, model.backbone_cfg, model.target, table, instances, nodes);
}

std::vector<double> percentage_errors(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw DataError("label and prediction counts differ");
  std::vector<double> e(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0.0)) throw DataError("percentage error undefined for a non-positive label");
    e[i] = std::abs(y[i] - yhat[i]) / y[i];
  }
  return e;
}

double mape(std::span<const double> y, std::span<const double> yhat) {
  if (y.empty()) throw DataError("mape of an empty set");
  const auto e = percentage_errors(y, yhat);
  double s = 0.0;
  for (double v : e) s += v;
  return s / static_cast<double>(e.size());
}

double acc(std::span<const double> errors, double epsilon) {
  if (errors.empty()) throw DataError("acc of an empty set");
  std::size_t hits = 0;
  for (double x : errors) {
    if (!(x >= 0.0)) throw DataError("acc requires non-negative errors");
    if (x < epsilon) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

Metrics evaluate_predictions(std::span<const double> y, std::span<const double> yhat, double epsilon) {
  if (y.size() != yhat.size()) throw DataError("label and prediction counts differ");
  std::vector<double> ys, ps;
  Metrics m;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) {
      ++m.excluded_zero_labels;
      continue;
    }
    ys.push_back(y[i]);
    ps.push_back(yhat[i]);
  }
  if (ys.empty()) throw DataError("no instance with a positive label to evaluate");
  const auto e = percentage_errors(ys, ps);
  m.n = ys.size();
  m.mape = mape(ys, ps);
  m.acc = acc(e, epsilon);
  return m;
}

Metrics evaluate(const Model& model, const AttributedGraph& graph, const FeatureTable& table,
                 std::span<const Instance> instances, std::span<const std::size_t> nodes, double epsilon) {
  return evaluate_predictions(labels_of(graph, nodes), predict(model, table, instances, nodes), epsilon);
}

void save_model(const std::string& path, const Model& model, std::uint64_t config_hash) {
  nlohmann::json meta = detail::backbone_json(model.backbone_cfg);
  meta["kind"] = "model";
  meta["target_scale"] = model.target.scale();
  Checkpoint ck;
  ck.params = model.backbone;
  ck.params.merge(model.head);
  ck.params.merge(model.features.to_params());
  ck.config_hash = config_hash;
  ck.metadata = meta.dump();
  save_checkpoint(path, ck);
}

Model load_model(const std::string& path, std::uint64_t* config_hash) {
  const Checkpoint ck = load_checkpoint(path);
  const nlohmann::json meta = detail::parse_metadata(ck.metadata, path, "model");
  Model m;
  m.backbone_cfg = detail::backbone_from_json(meta, path);
  try {
    m.target = TargetScaler(meta.at("target_scale").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": incomplete metadata: " + e.what());
  }
  m.features = FeatureScaler::from_params(ck.params.with_prefix("input/"));
  m.head = ck.params.with_prefix(groups::kHead);
  m.backbone = ck.params.without_prefix("input/").without_prefix(groups::kHead);
  if (config_hash) *config_hash = ck.config_hash;
  return m;
}

}  // namespace csst
