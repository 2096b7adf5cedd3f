#include "csst/contrastive.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "csst/checkpoint.hpp"
#include "csst/error.hpp"
#include "metadata.hpp"

namespace csst {

using ad::Tape;
using ad::Var;

namespace {

std::string proj_layer(std::size_t i, const char* what) {
  return std::string(bank::kProjection) + "l" + std::to_string(i) + "/" + what;
}

// Streams of the seed used by pretraining.
enum Stream : std::uint64_t { kBackboneInit = 1, kBankInit = 2, kSampling = 3 };

}  // namespace

void PretrainConfig::validate() const {
  if (positives < 1) throw ConfigError("pretrain.positives (m) must be >= 1");
  if (prototypes < 2) throw ConfigError("pretrain.prototypes (K) must be >= 2");
  if (prototype_dim < 1) throw ConfigError("pretrain.prototype_dim must be positive");
  if (projection_layers < 1) throw ConfigError("pretrain.projection_layers must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("pretrain.temperature must be positive");
  if (!(sinkhorn_temperature >= 0.0)) throw ConfigError("pretrain.sinkhorn_temperature must be >= 0");
  if (batch_size < 1) throw ConfigError("pretrain.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("pretrain.learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("pretrain.weight_decay must be non-negative");
  if (plateau_patience > 0 && plateau_window < 1) throw ConfigError("pretrain.plateau_window must be >= 1");
  if (n_bins_area < 1 || n_bins_report < 1) throw ConfigError("pretrain bin counts must be >= 1");
}

ParamStore init_bank(std::size_t hidden, const PretrainConfig& cfg, Rng& rng) {
  ParamStore p;
  std::size_t fan_in = hidden;
  for (std::size_t i = 0; i < cfg.projection_layers; ++i) {
    const std::size_t out = i + 1 == cfg.projection_layers ? cfg.prototype_dim : hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w = Tensor::matrix(fan_in, out);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    // Zero bias: a shared random offset would dominate every normalized
    // projection and make all embeddings point the same way.
    p.set(proj_layer(i, "W"), std::move(w));
    p.set(proj_layer(i, "b"), Tensor::matrix(1, out));
    fan_in = out;
  }
  Tensor c = Tensor::matrix(cfg.prototypes, cfg.prototype_dim);
  for (double& v : c.data()) v = rng.normal();
  p.set(bank::kPrototypes, std::move(c));
  normalize_prototypes(p);
  return p;
}

void normalize_prototypes(ParamStore& bank_params) {
  Tensor& c = bank_params.at(bank::kPrototypes);
  for (std::size_t i = 0; i < c.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c.cols(); ++j) s += c(i, j) * c(i, j);
    const double n = std::sqrt(s);
    if (n < 1e-300) throw NumericError("prototype row collapsed to zero");
    for (std::size_t j = 0; j < c.cols(); ++j) c(i, j) /= n;
  }
}

Var center_rows(Var x) {
  const std::size_t n = x.value().rows();
  Var mean = ad::scale(ad::segment_sum(x, std::vector<std::size_t>(n, 0), 1), -1.0 / static_cast<double>(n));
  return ad::add_row(x, mean);
}

Var project(Tape& tape, const ParamStore& bank_params, Var embeddings, std::size_t layers) {
  Var x = embeddings;
  for (std::size_t i = 0; i < layers; ++i) {
    x = ad::add_row(ad::matmul(x, tape.param(bank_params, proj_layer(i, "W"))), tape.param(bank_params, proj_layer(i, "b")));
    if (i + 1 < layers) x = ad::relu(x);
  }
  return x;
}

Tensor prototype_probs_from_scores(const Tensor& scores, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  Tensor scaled = scores;
  for (double& v : scaled.data()) v /= temperature;
  return ad::row_softmax(scaled);
}

Tensor prototype_probs(const Tensor& embedding, const ParamStore& bank_params, const PretrainConfig& cfg) {
  Tape tape;
  Var z = ad::row_normalize(project(tape, bank_params, tape.constant(embedding), cfg.projection_layers));
  Var s = ad::matmul_nt(z, tape.param(bank_params, bank::kPrototypes));
  return prototype_probs_from_scores(s.value(), cfg.temperature);
}

Tensor sinkhorn_codes(const Tensor& scores, std::size_t n_iters, double temperature) {
  scores.require_finite("sinkhorn scores");
  if (!(temperature > 0.0)) throw ConfigError("sinkhorn temperature must be positive");
  const std::size_t B = scores.rows(), K = scores.cols();
  if (K < 2) throw ConfigError("sinkhorn requires at least two prototypes");

  double smax = -std::numeric_limits<double>::infinity();
  for (double v : scores.data()) smax = std::max(smax, v);
  Tensor q = Tensor::matrix(B, K);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::exp((scores[i] - smax) / temperature);

  auto normalize_rows = [&] {
    for (std::size_t i = 0; i < B; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < K; ++j) s += q(i, j);
      if (s > 0.0) {
        for (std::size_t j = 0; j < K; ++j) q(i, j) /= s;
      } else {
        for (std::size_t j = 0; j < K; ++j) q(i, j) = 1.0 / static_cast<double>(K);
      }
    }
  };
  // Column targets B/K differ from plain column normalization by a global
  // factor, which the following row step cancels. Rescaling by the max keeps
  // the entries O(1) and makes a uniform input stay exactly uniform.
  auto normalize_cols = [&] {
    std::vector<double> col(K, 0.0);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < K; ++j) col[j] += q(i, j);
    double m = 0.0;
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < K; ++j) {
        if (col[j] > 0.0) q(i, j) /= col[j];
        m = std::max(m, q(i, j));
      }
    if (m > 0.0)
      for (double& v : q.data()) v /= m;
  };

  for (std::size_t it = 0; it < n_iters; ++it) {
    normalize_cols();
    normalize_rows();
  }
  if (n_iters == 0) normalize_rows();
  return q;
}

namespace {

Var loss_from_scores(Tape& tape, Var scores, std::span<const std::size_t> row_of_batch,
                     std::span<const std::pair<std::size_t, std::size_t>> pairs, const Tensor& codes,
                     double temperature) {
  if (pairs.empty()) throw ConfigError("swapped_loss needs at least one pair");
  const std::size_t U = scores.rows(), K = scores.cols();
  if (codes.rows() != row_of_batch.size() || codes.cols() != K) throw ConfigError("codes must be (batch rows) x K");

  // sum over pairs of  q_pos . log p_anchor + q_anchor . log p_pos, folded
  // into one weight per (unique row, prototype).
  Tensor weights = Tensor::matrix(U, K);
  for (const auto& [a, p] : pairs) {
    if (a >= row_of_batch.size() || p >= row_of_batch.size()) throw ConfigError("swapped_loss pair out of range");
    const std::size_t ua = row_of_batch[a], up = row_of_batch[p];
    if (ua >= U || up >= U) throw ConfigError("swapped_loss row mapping out of range");
    for (std::size_t k = 0; k < K; ++k) {
      weights(ua, k) += codes(p, k);
      weights(up, k) += codes(a, k);
    }
  }
  Var log_p = ad::row_log_softmax(ad::scale(scores, 1.0 / temperature));
  Var total = ad::sum(ad::mul(tape.constant(std::move(weights)), log_p));
  return ad::scale(total, -1.0 / static_cast<double>(pairs.size()));
}

Tensor codes_from_scores(const Tensor& scores, std::span<const std::size_t> row_of_batch, double temperature,
                         std::size_t sinkhorn_iterations) {
  const std::size_t K = scores.cols();
  Tensor expanded = Tensor::matrix(row_of_batch.size(), K);
  for (std::size_t i = 0; i < row_of_batch.size(); ++i) {
    if (row_of_batch[i] >= scores.rows()) throw ConfigError("swapped_loss row mapping out of range");
    std::copy_n(&scores(row_of_batch[i], 0), K, &expanded(i, 0));
  }
  return sinkhorn_codes(expanded, sinkhorn_iterations, temperature);
}

}  // namespace

Var swapped_loss_with_codes(Tape& tape, Var normalized_unique, std::span<const std::size_t> row_of_batch,
                            Var prototypes, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                            const Tensor& codes, double temperature) {
  return loss_from_scores(tape, ad::matmul_nt(normalized_unique, prototypes), row_of_batch, pairs, codes, temperature);
}

Tensor batch_codes(Var normalized_unique, std::span<const std::size_t> row_of_batch, Var prototypes,
                   double temperature, std::size_t sinkhorn_iterations) {
  Tape scratch;
  Var s = ad::matmul_nt(scratch.constant(normalized_unique.value()), scratch.constant(prototypes.value()));
  return codes_from_scores(s.value(), row_of_batch, temperature, sinkhorn_iterations);
}

Var swapped_loss(Tape& tape, Var normalized_unique, std::span<const std::size_t> row_of_batch, Var prototypes,
                 std::span<const std::pair<std::size_t, std::size_t>> pairs, double temperature,
                 std::size_t sinkhorn_iterations) {
  Var scores = ad::matmul_nt(normalized_unique, prototypes);
  const Tensor codes = codes_from_scores(scores.value(), row_of_batch, temperature, sinkhorn_iterations);
  return loss_from_scores(tape, scores, row_of_batch, pairs, codes, temperature);
}

Var swapped_loss(Tape& tape, Var normalized, Var prototypes, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                 double temperature, std::size_t sinkhorn_iterations) {
  std::vector<std::size_t> identity(normalized.rows());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
  return swapped_loss(tape, normalized, identity, prototypes, pairs, temperature, sinkhorn_iterations);
}

double swapped_loss(const Tensor& o_anchor, const Tensor& o_positive, const ParamStore& bank_params,
                    const PretrainConfig& cfg) {
  if (!o_anchor.same_shape(o_positive) || o_anchor.rows() != 1) {
    throw ConfigError("swapped_loss expects two 1 x d embeddings");
  }
  Tape tape;
  Tensor both = Tensor::matrix(2, o_anchor.cols());
  std::copy_n(o_anchor.data().data(), o_anchor.cols(), &both(0, 0));
  std::copy_n(o_positive.data().data(), o_positive.cols(), &both(1, 0));
  Var z = ad::row_normalize(project(tape, bank_params, tape.constant(std::move(both)), cfg.projection_layers));
  const std::pair<std::size_t, std::size_t> pair{0, 1};
  Var prototypes = tape.param(bank_params, bank::kPrototypes);
  const std::size_t rows[] = {0, 1};
  const Tensor codes = batch_codes(z, rows, prototypes, cfg.code_temperature(), cfg.sinkhorn_iterations);
  return swapped_loss_with_codes(tape, z, rows, prototypes, std::span(&pair, 1), codes, cfg.temperature).value().item();
}

Var pretrain_batch_loss(Tape& tape, const ParamStore& backbone, const ParamStore& bank_params,
                        const BackboneConfig& backbone_cfg, const PretrainConfig& cfg, const FeatureTable& features,
                        std::span<const Instance> instances, std::span<const std::size_t> anchors,
                        std::span<const std::vector<std::size_t>> positives, const Tensor* fixed_codes,
                        Tensor* codes_out) {
  if (anchors.size() != positives.size()) throw ConfigError("one positive list per anchor required");
  std::vector<Instance> batch;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (auto a : anchors) batch.push_back(instances[a]);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (auto p : positives[i]) {
      pairs.emplace_back(i, batch.size());
      batch.push_back(instances[p]);
    }
  }
  auto emb = backbone_forward_dedup(tape, backbone, backbone_cfg, features, batch);
  Var h = emb.unique;
  if (cfg.center_embeddings) h = center_rows(h);
  Var z = ad::row_normalize(project(tape, bank_params, h, cfg.projection_layers));
  Var scores = ad::matmul_nt(z, tape.param(bank_params, bank::kPrototypes));
  Tensor codes = fixed_codes ? *fixed_codes
                             : codes_from_scores(scores.value(), emb.row_of_input, cfg.code_temperature(),
                                                 cfg.sinkhorn_iterations);
  Var loss = loss_from_scores(tape, scores, emb.row_of_input, pairs, codes, cfg.temperature);
  if (codes_out) *codes_out = std::move(codes);
  return loss;
}

PretrainResult pretrain(const AttributedGraph& graph, const FeatureTable& features, const AugmentationIndex& index,
                        const BackboneConfig& backbone_cfg, const PretrainConfig& cfg, std::uint64_t seed,
                        const StepCallback& on_step) {
  cfg.validate();
  backbone_cfg.validate();
  if (graph.size() == 0) throw DataError("pretraining on an empty dataset");
  if (index.size() != graph.size()) throw ConfigError("augmentation index does not match the graph");

  Rng init_rng = Rng::derive(seed, kBackboneInit);
  Rng bank_rng = Rng::derive(seed, kBankInit);
  Rng rng = Rng::derive(seed, kSampling);

  ParamStore params = init_backbone(backbone_cfg, init_rng);
  params.merge(init_bank(backbone_cfg.hidden, cfg, bank_rng));

  const std::size_t hops = backbone_cfg.variant == Variant::Stgnn ? backbone_cfg.hops : 0;
  std::vector<Instance> instances;
  instances.reserve(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) instances.push_back(khop_subgraph(graph, i, hops, backbone_cfg.max_neighbors));

  PretrainResult result;
  std::vector<std::size_t> augmentable;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (index.augmentable(i)) augmentable.push_back(i);
  }
  result.unaugmentable = graph.size() - augmentable.size();
  if (augmentable.empty()) throw DataError("no POI can be augmented; every anchor would be skipped");

  OptimizerConfig opt_cfg;
  opt_cfg.kind = cfg.optimizer;
  opt_cfg.learning_rate = cfg.learning_rate;
  opt_cfg.weight_decay = cfg.weight_decay;
  opt_cfg.lr_divisor = 1.0;
  Optimizer optimizer(opt_cfg);

  std::vector<std::size_t> order = augmentable;
  std::size_t cursor = order.size();
  auto shuffle = [&] {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    cursor = 0;
  };
  std::vector<std::vector<std::size_t>> fixed_positives(graph.size());

  const auto start = std::chrono::steady_clock::now();
  double best_ma = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  const std::size_t batch = std::min(cfg.batch_size, augmentable.size());

  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    std::vector<std::size_t> anchors;
    std::vector<std::vector<std::size_t>> positives;
    while (anchors.size() < batch) {
      if (cursor == order.size()) shuffle();
      const std::size_t a = order[cursor++];
      if (!cfg.resample_positives && !fixed_positives[a].empty()) {
        positives.push_back(fixed_positives[a]);
      } else {
        PositiveSample s = index.sample_positives(a, cfg.positives, rng);
        if (s.source == PositiveSource::AreaFallback) ++result.fallback_draws;
        if (!cfg.resample_positives) fixed_positives[a] = s.positives;
        positives.push_back(std::move(s.positives));
      }
      anchors.push_back(a);
    }

    Tape tape;
    Var loss = pretrain_batch_loss(tape, params, params, backbone_cfg, cfg, features, instances, anchors, positives);
    const GradStore grads = tape.grad(loss, params);
    optimizer.step(params, grads);
    normalize_prototypes(params);

    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    LossRecord rec{step, loss.value().item(), ms};
    result.losses.push_back(rec);
    result.steps = step + 1;
    if (on_step) on_step(rec);

    if (cfg.plateau_patience > 0 && result.losses.size() >= cfg.plateau_window) {
      double ma = 0.0;
      for (std::size_t i = result.losses.size() - cfg.plateau_window; i < result.losses.size(); ++i)
        ma += result.losses[i].loss;
      ma /= static_cast<double>(cfg.plateau_window);
      if (ma < best_ma * (1.0 - cfg.plateau_tolerance)) {
        best_ma = ma;
        since_best = 0;
      } else if (++since_best >= cfg.plateau_patience) {
        result.early_stopped = true;
        break;
      }
    }
  }

  for (const auto& [name, t] : params) {
    if (name.starts_with(bank::kProjection) || name.starts_with("prototypes/")) {
      result.bank.set(name, t);
    } else {
      result.backbone.set(name, t);
    }
  }
  return result;
}

void write_loss_log(const std::string& path, std::span<const LossRecord> losses) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write loss log: " + path);
  os << "step,loss,wall_ms\n";
  char buf[96];
  for (const auto& r : losses) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.3f\n", r.step, r.loss, r.wall_ms);
    os << buf;
  }
}

void save_pretrained(const std::string& path, const PretrainedBackbone& p, std::uint64_t config_hash) {
  nlohmann::json meta = detail::backbone_json(p.backbone_cfg);
  meta["kind"] = "pretrain";
  meta["steps"] = p.steps;
  Checkpoint ck;
  ck.params = p.backbone;
  ck.params.merge(p.bank);
  ck.config_hash = config_hash;
  ck.metadata = meta.dump();
  save_checkpoint(path, ck);
}

PretrainedBackbone load_pretrained(const std::string& path, std::uint64_t* config_hash) {
  const Checkpoint ck = load_checkpoint(path);
  const nlohmann::json meta = detail::parse_metadata(ck.metadata, path, "pretrain");
  PretrainedBackbone p;
  p.backbone_cfg = detail::backbone_from_json(meta, path);
  p.steps = meta.value("steps", std::size_t{0});
  p.bank = ck.params.with_prefix(bank::kProjection);
  p.bank.merge(ck.params.with_prefix(bank::kPrototypes));
  p.backbone = ck.params.without_prefix(bank::kProjection).without_prefix(bank::kPrototypes);
  if (config_hash) *config_hash = ck.config_hash;
  return p;
}

}  // namespace csst
