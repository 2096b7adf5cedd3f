#include "csst/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "csst/error.hpp"

namespace csst {

using ad::Tape;
using ad::Var;

Variant parse_variant(const std::string& name) {
  if (name == "mlp") return Variant::Mlp;
  if (name == "msfnet") return Variant::MsfNet;
  if (name == "stgnn") return Variant::Stgnn;
  throw ConfigError("unknown backbone variant '" + name + "' (expected mlp, msfnet or stgnn)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Mlp: return "mlp";
    case Variant::MsfNet: return "msfnet";
    case Variant::Stgnn: return "stgnn";
  }
  return "?";
}

void BackboneConfig::validate() const {
  if (hidden < 32 || hidden > 1024) throw ConfigError("hidden dim must be in [32, 1024]");
  if (mlp_layers < 1 || mlp_layers > 4) throw ConfigError("mlp_layers must be in [1, 4]");
  if (conv_layers < 1) throw ConfigError("conv_layers must be >= 1");
  if (!(sigma_m > 0.0)) throw ConfigError("sigma must be positive");
  if (attr_dim == 0 || portrait_dim == 0 || report_dim == 0) throw ConfigError("input dimensions must be positive");
}

std::vector<std::string> backbone_groups(Variant v) {
  switch (v) {
    case Variant::Mlp: return {groups::kFusion};
    case Variant::MsfNet: return {groups::kAttr, groups::kPortrait, groups::kReport, groups::kFusion};
    case Variant::Stgnn:
      return {groups::kAttr, groups::kPortrait, groups::kEdge, groups::kMessage, groups::kReport, groups::kFusion};
  }
  return {};
}

namespace {

namespace names {
const std::string kFuse = std::string(groups::kFusion) + "fuse/";
const std::string kBranch = std::string(groups::kFusion) + "branch/";
const std::string kFlat = std::string(groups::kFusion) + "flat/";
std::string message_round(std::size_t r) { return std::string(groups::kMessage) + "r" + std::to_string(r) + "/"; }
std::string layer(const std::string& prefix, std::size_t i, const char* what) {
  return prefix + "l" + std::to_string(i) + "/" + what;
}
}  // namespace names

void init_stack(ParamStore& out, const std::string& prefix, std::size_t in, std::size_t width, std::size_t layers,
                Rng& rng) {
  std::size_t fan_in = in;
  for (std::size_t i = 0; i < layers; ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w = Tensor::matrix(fan_in, width);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    Tensor b = Tensor::matrix(1, width);
    for (double& v : b.data()) v = rng.uniform(-bound, bound);
    out.set(names::layer(prefix, i, "W"), std::move(w));
    out.set(names::layer(prefix, i, "b"), std::move(b));
    fan_in = width;
  }
}

std::size_t message_input_width(const BackboneConfig& cfg, std::size_t round) {
  const std::size_t node = round == 0 ? 2 * cfg.hidden : cfg.hidden;
  return 2 * node + cfg.hidden;
}

Tensor rows_of(const Tensor& table, std::span<const std::size_t> rows) {
  Tensor out = Tensor::matrix(rows.size(), table.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(&table(rows[i], 0), table.cols(), &out(i, 0));
  return out;
}

Tensor single_row(std::span<const double> v) { return Tensor::row(std::vector<double>(v.begin(), v.end())); }

void require_width(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ConfigError(std::string(what) + ": expected width " + std::to_string(want) + ", got " + std::to_string(got));
  }
}

Var node_embedding(Tape& tape, const ParamStore& params, const BackboneConfig& cfg, Var attrs, Var portrait) {
  Var pa = mlp_forward(tape, params, groups::kAttr, attrs, cfg.mlp_layers);
  Var pc = mlp_forward(tape, params, groups::kPortrait, portrait, cfg.mlp_layers);
  const Var parts[] = {pa, pc};
  return ad::concat_cols(parts);
}

Var edge_embedding(Tape& tape, const ParamStore& params, const BackboneConfig& cfg, std::span<const double> distances) {
  Tensor w = Tensor::matrix(distances.size(), 1);
  for (std::size_t i = 0; i < distances.size(); ++i) w[i] = edge_weight(distances[i], cfg.sigma_m);
  return mlp_forward(tape, params, groups::kEdge, tape.constant(std::move(w)), cfg.mlp_layers);
}

// Messages f_g(p_dst, p_src, e) for the given edge rows, summed per segment.
// The first layer acts on [p_dst | p_src | e]; its node blocks are applied
// once per state row and gathered per edge.
Var aggregate(Tape& tape, const ParamStore& params, const BackboneConfig& cfg, std::size_t round, Var node_states,
              std::vector<std::size_t> dst_rows, std::vector<std::size_t> src_rows, std::span<const double> distances,
              std::vector<std::size_t> segments, std::size_t n_segments) {
  const std::string prefix = names::message_round(round);
  const std::size_t width = node_states.cols();
  Var w = tape.param(params, names::layer(prefix, 0, "W"));
  Var b = tape.param(params, names::layer(prefix, 0, "b"));
  if (w.rows() != 2 * width + cfg.hidden) {
    throw ConfigError(prefix + "l0: fan-in " + std::to_string(w.rows()) + " does not match message width " +
                      std::to_string(2 * width + cfg.hidden));
  }
  Var e = edge_embedding(tape, params, cfg, distances);
  Var from_dst = ad::gather_rows(ad::matmul(node_states, ad::slice_rows(w, 0, width)), std::move(dst_rows));
  Var from_src = ad::gather_rows(ad::matmul(node_states, ad::slice_rows(w, width, 2 * width)), std::move(src_rows));
  Var from_edge = ad::matmul(e, ad::slice_rows(w, 2 * width, w.rows()));
  Var h = ad::relu(ad::add_row(ad::add(ad::add(from_dst, from_src), from_edge), b));
  for (std::size_t i = 1; i < cfg.mlp_layers; ++i) {
    h = ad::relu(ad::add_row(ad::matmul(h, tape.param(params, names::layer(prefix, i, "W"))),
                             tape.param(params, names::layer(prefix, i, "b"))));
  }
  return ad::segment_sum(h, std::move(segments), n_segments);
}

Var fusion(Tape& tape, const ParamStore& params, const BackboneConfig& cfg, Var o_reports, Var o_graph) {
  const Var parts[] = {o_reports, o_graph};
  return mlp_forward(tape, params, names::kFuse, ad::concat_cols(parts), cfg.mlp_layers);
}

// One canonicalized subgraph per unique target.
struct LocalGraph {
  std::vector<std::size_t> nodes;  // graph indices, target first, rest ascending
  struct Edge {
    std::size_t dst, src;  // local
    double distance_m;
  };
  std::vector<Edge> edges;  // sorted by (dst, graph index of src)

  static LocalGraph from(const Instance& inst) {
    if (inst.nodes.empty() || inst.nodes.front() != inst.target) throw DataError("instance does not start with its target");
    LocalGraph lg;
    lg.nodes = inst.nodes;
    std::sort(lg.nodes.begin() + 1, lg.nodes.end());
    std::map<std::size_t, std::size_t> local;
    for (std::size_t i = 0; i < lg.nodes.size(); ++i) local.emplace(lg.nodes[i], i);
    if (local.size() != lg.nodes.size()) throw DataError("instance lists a node twice");
    for (const auto& e : inst.edges) {
      if (e.dst >= inst.nodes.size() || e.src >= inst.nodes.size()) throw DataError("instance edge out of range");
      lg.edges.push_back({local.at(inst.nodes[e.dst]), local.at(inst.nodes[e.src]), e.distance_m});
    }
    std::sort(lg.edges.begin(), lg.edges.end(), [&](const Edge& a, const Edge& b) {
      if (a.dst != b.dst) return a.dst < b.dst;
      return lg.nodes[a.src] < lg.nodes[b.src];
    });
    return lg;
  }
};

Var stgnn_forward(Tape& tape, const ParamStore& params, const BackboneConfig& cfg, const FeatureTable& features,
                  std::span<const LocalGraph> graphs) {
  // Node embeddings are context free: compute them once per distinct POI.
  std::vector<std::size_t> unique_nodes;
  for (const auto& g : graphs) unique_nodes.insert(unique_nodes.end(), g.nodes.begin(), g.nodes.end());
  std::sort(unique_nodes.begin(), unique_nodes.end());
  unique_nodes.erase(std::unique(unique_nodes.begin(), unique_nodes.end()), unique_nodes.end());
  auto unique_row = [&](std::size_t node) {
    return static_cast<std::size_t>(std::lower_bound(unique_nodes.begin(), unique_nodes.end(), node) -
                                    unique_nodes.begin());
  };
  Var p0 = node_embedding(tape, params, cfg, tape.constant(rows_of(features.attributes, unique_nodes)),
                          tape.constant(rows_of(features.portrait, unique_nodes)));

  // Local layout: graph k occupies rows [offset[k], offset[k] + |nodes|).
  std::vector<std::size_t> offset(graphs.size());
  std::vector<std::size_t> local_to_unique;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    offset[k] = local_to_unique.size();
    for (auto n : graphs[k].nodes) local_to_unique.push_back(unique_row(n));
  }
  const std::size_t total_rows = local_to_unique.size();

  Var states = p0;
  bool states_are_unique = true;
  Var o_graph;
  for (std::size_t r = 0; r < cfg.conv_layers; ++r) {
    const bool last = r + 1 == cfg.conv_layers;
    std::vector<std::size_t> dst_rows, src_rows, segments;
    std::vector<double> distances;
    for (std::size_t k = 0; k < graphs.size(); ++k) {
      const auto& g = graphs[k];
      const std::size_t n_dst = last ? 1 : g.nodes.size();
      std::size_t e = 0;
      for (std::size_t dst = 0; dst < n_dst; ++dst) {
        const std::size_t seg = last ? k : offset[k] + dst;
        bool any = false;
        for (; e < g.edges.size() && g.edges[e].dst == dst; ++e) {
          dst_rows.push_back(offset[k] + dst);
          src_rows.push_back(offset[k] + g.edges[e].src);
          distances.push_back(g.edges[e].distance_m);
          segments.push_back(seg);
          any = true;
        }
        if (!any) {
          // Isolated within the instance: self message at distance 0.
          dst_rows.push_back(offset[k] + dst);
          src_rows.push_back(offset[k] + dst);
          distances.push_back(0.0);
          segments.push_back(seg);
        }
      }
    }
    if (states_are_unique) {
      auto remap = [&](std::vector<std::size_t>& rows) {
        for (auto& x : rows) x = local_to_unique[x];
      };
      remap(dst_rows);
      remap(src_rows);
    }
    Var agg = aggregate(tape, params, cfg, r, states, std::move(dst_rows), std::move(src_rows), distances,
                        std::move(segments), last ? graphs.size() : total_rows);
    if (last) {
      o_graph = agg;
    } else {
      states = agg;
      states_are_unique = false;
    }
  }

  std::vector<std::size_t> targets;
  for (const auto& g : graphs) targets.push_back(g.nodes.front());
  Var o_reports = mlp_forward(tape, params, groups::kReport, tape.constant(rows_of(features.reports, targets)),
                              cfg.mlp_layers);
  return fusion(tape, params, cfg, o_reports, o_graph);
}

Var msfnet_forward(Tape& tape, const ParamStore& params, const BackboneConfig& cfg, const FeatureTable& features,
                   std::span<const std::size_t> targets) {
  Var p0 = node_embedding(tape, params, cfg, tape.constant(rows_of(features.attributes, targets)),
                          tape.constant(rows_of(features.portrait, targets)));
  Var branch = mlp_forward(tape, params, names::kBranch, p0, cfg.mlp_layers);
  Var o_reports = mlp_forward(tape, params, groups::kReport, tape.constant(rows_of(features.reports, targets)),
                              cfg.mlp_layers);
  return fusion(tape, params, cfg, o_reports, branch);
}

Var mlp_variant_forward(Tape& tape, const ParamStore& params, const BackboneConfig& cfg, const FeatureTable& features,
                        std::span<const std::size_t> targets) {
  const Var parts[] = {tape.constant(rows_of(features.attributes, targets)),
                       tape.constant(rows_of(features.portrait, targets)),
                       tape.constant(rows_of(features.reports, targets))};
  return mlp_forward(tape, params, names::kFlat, ad::concat_cols(parts), cfg.mlp_layers);
}

}  // namespace

ParamStore init_backbone(const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.hidden, L = cfg.mlp_layers;
  ParamStore p;
  switch (cfg.variant) {
    case Variant::Mlp:
      init_stack(p, names::kFlat, cfg.attr_dim + cfg.portrait_dim + cfg.report_dim, d, L, rng);
      break;
    case Variant::MsfNet:
      init_stack(p, groups::kAttr, cfg.attr_dim, d, L, rng);
      init_stack(p, groups::kPortrait, cfg.portrait_dim, d, L, rng);
      init_stack(p, names::kBranch, 2 * d, d, L, rng);
      init_stack(p, groups::kReport, cfg.report_dim, d, L, rng);
      init_stack(p, names::kFuse, 2 * d, d, L, rng);
      break;
    case Variant::Stgnn:
      init_stack(p, groups::kAttr, cfg.attr_dim, d, L, rng);
      init_stack(p, groups::kPortrait, cfg.portrait_dim, d, L, rng);
      init_stack(p, groups::kEdge, 1, d, L, rng);
      for (std::size_t r = 0; r < cfg.conv_layers; ++r)
        init_stack(p, names::message_round(r), message_input_width(cfg, r), d, L, rng);
      init_stack(p, groups::kReport, cfg.report_dim, d, L, rng);
      init_stack(p, names::kFuse, 2 * d, d, L, rng);
      break;
  }
  return p;
}

ParamStore init_head(const BackboneConfig& cfg, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  Tensor w = Tensor::matrix(cfg.hidden, 1);
  for (double& v : w.data()) v = rng.uniform(-bound, bound);
  ParamStore p;
  p.set(std::string(groups::kHead) + "W", std::move(w));
  p.set(std::string(groups::kHead) + "b", Tensor::matrix(1, 1, rng.uniform(-bound, bound)));
  return p;
}

FeatureScaler FeatureScaler::fit(std::span<const Poi> pois) {
  if (pois.empty()) throw ConfigError("FeatureScaler::fit on empty POI list");
  const std::size_t da = pois.front().attributes.size();
  const std::size_t dr = pois.front().reports.size();
  FeatureScaler s;
  s.attr_mean_.assign(da, 0.0);
  s.attr_std_.assign(da, 1.0);
  s.report_mean_.assign(dr, 0.0);
  s.report_std_.assign(dr, 1.0);
  auto raw_attr = [](const Poi& p, std::size_t j) { return j == 0 ? std::log(p.attributes[0]) : p.attributes[j]; };
  auto raw_report = [](const Poi& p, std::size_t j) { return std::log1p(p.reports[j]); };
  auto stats = [&](std::size_t dim, auto raw, std::vector<double>& mean, std::vector<double>& sd) {
    for (std::size_t j = 0; j < dim; ++j) {
      double m = 0.0;
      for (const auto& p : pois) m += raw(p, j);
      m /= static_cast<double>(pois.size());
      double v = 0.0;
      for (const auto& p : pois) v += (raw(p, j) - m) * (raw(p, j) - m);
      v /= static_cast<double>(pois.size());
      mean[j] = m;
      sd[j] = v > 1e-24 ? std::sqrt(v) : 1.0;
    }
  };
  for (const auto& p : pois) {
    if (p.attributes.size() != da || p.reports.size() != dr) throw DataError("POIs have inconsistent feature widths");
  }
  stats(da, raw_attr, s.attr_mean_, s.attr_std_);
  stats(dr, raw_report, s.report_mean_, s.report_std_);
  return s;
}

std::vector<double> FeatureScaler::attributes(const Poi& p) const {
  require_width(p.attributes.size(), attr_mean_.size(), "attributes");
  std::vector<double> out(p.attributes.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double raw = j == 0 ? std::log(p.attributes[0]) : p.attributes[j];
    out[j] = (raw - attr_mean_[j]) / attr_std_[j];
  }
  return out;
}

std::vector<double> FeatureScaler::portrait(const Poi& p) const { return p.portrait; }

std::vector<double> FeatureScaler::reports(std::span<const double> x) const {
  require_width(x.size(), report_mean_.size(), "reports");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = (std::log1p(x[j]) - report_mean_[j]) / report_std_[j];
  return out;
}

ParamStore FeatureScaler::to_params() const {
  ParamStore p;
  p.set("input/attr_mean", Tensor::row(attr_mean_));
  p.set("input/attr_std", Tensor::row(attr_std_));
  p.set("input/report_mean", Tensor::row(report_mean_));
  p.set("input/report_std", Tensor::row(report_std_));
  return p;
}

FeatureScaler FeatureScaler::from_params(const ParamStore& p) {
  auto vec = [&](const char* name) {
    const auto d = p.at(name).data();
    return std::vector<double>(d.begin(), d.end());
  };
  FeatureScaler s;
  s.attr_mean_ = vec("input/attr_mean");
  s.attr_std_ = vec("input/attr_std");
  s.report_mean_ = vec("input/report_mean");
  s.report_std_ = vec("input/report_std");
  return s;
}

FeatureTable FeatureTable::build(const AttributedGraph& g, const FeatureScaler& scaler) {
  if (g.size() == 0) throw DataError("feature table over an empty graph");
  const auto& first = g.node(0);
  FeatureTable t;
  t.attributes = Tensor::matrix(g.size(), first.attributes.size());
  t.portrait = Tensor::matrix(g.size(), first.portrait.size());
  t.reports = Tensor::matrix(g.size(), first.reports.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Poi& p = g.node(i);
    const auto a = scaler.attributes(p);
    if (p.portrait.size() != t.portrait.cols()) throw DataError("POIs have inconsistent portrait widths");
    const auto r = scaler.reports(p.reports);
    std::copy(a.begin(), a.end(), &t.attributes(i, 0));
    std::copy(p.portrait.begin(), p.portrait.end(), &t.portrait(i, 0));
    std::copy(r.begin(), r.end(), &t.reports(i, 0));
  }
  return t;
}

Var mlp_forward(Tape& tape, const ParamStore& params, const std::string& prefix, Var x, std::size_t layers) {
  for (std::size_t i = 0; i < layers; ++i) {
    Var w = tape.param(params, names::layer(prefix, i, "W"));
    Var b = tape.param(params, names::layer(prefix, i, "b"));
    if (x.cols() != w.rows()) {
      throw ConfigError(prefix + "l" + std::to_string(i) + ": input width " + std::to_string(x.cols()) +
                        " does not match layer fan-in " + std::to_string(w.rows()));
    }
    x = ad::relu(ad::add_row(ad::matmul(x, w), b));
  }
  return x;
}

BatchEmbedding backbone_forward_dedup(Tape& tape, const ParamStore& params, const BackboneConfig& cfg,
                                      const FeatureTable& features, std::span<const Instance> instances) {
  if (instances.empty()) throw ConfigError("backbone_forward on an empty batch");
  for (const auto& inst : instances) {
    if (inst.target >= features.size()) throw DataError("instance target outside the feature table");
  }
  // Distinct targets in ascending graph order; duplicates map onto one row.
  std::vector<std::size_t> targets;
  for (const auto& inst : instances) targets.push_back(inst.target);
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  std::vector<std::size_t> row_of_input;
  row_of_input.reserve(instances.size());
  for (const auto& inst : instances) {
    row_of_input.push_back(
        static_cast<std::size_t>(std::lower_bound(targets.begin(), targets.end(), inst.target) - targets.begin()));
  }

  Var out;
  switch (cfg.variant) {
    case Variant::Mlp:
      out = mlp_variant_forward(tape, params, cfg, features, targets);
      break;
    case Variant::MsfNet:
      out = msfnet_forward(tape, params, cfg, features, targets);
      break;
    case Variant::Stgnn: {
      std::vector<LocalGraph> graphs(targets.size());
      std::vector<bool> seen(targets.size(), false);
      for (std::size_t i = 0; i < instances.size(); ++i) {
        if (seen[row_of_input[i]]) continue;
        seen[row_of_input[i]] = true;
        graphs[row_of_input[i]] = LocalGraph::from(instances[i]);
      }
      out = stgnn_forward(tape, params, cfg, features, graphs);
      break;
    }
  }
  return {out, std::move(row_of_input)};
}

Var backbone_forward(Tape& tape, const ParamStore& params, const BackboneConfig& cfg, const FeatureTable& features,
                     std::span<const Instance> instances) {
  auto [out, row_of_input] = backbone_forward_dedup(tape, params, cfg, features, instances);
  bool identity = row_of_input.size() == out.rows();
  for (std::size_t i = 0; identity && i < row_of_input.size(); ++i) identity = row_of_input[i] == i;
  return identity ? out : ad::gather_rows(out, std::move(row_of_input));
}

Var head_logits(Tape& tape, const ParamStore& head, Var embeddings) {
  Var w = tape.param(head, std::string(groups::kHead) + "W");
  Var b = tape.param(head, std::string(groups::kHead) + "b");
  return ad::add_row(ad::matmul(embeddings, w), b);
}

Tensor encode_node(std::span<const double> attr_features, std::span<const double> portrait, const ParamStore& params,
                   const BackboneConfig& cfg) {
  require_width(attr_features.size(), cfg.attr_dim, "encode_node attributes");
  require_width(portrait.size(), cfg.portrait_dim, "encode_node portrait");
  Tape tape;
  return node_embedding(tape, params, cfg, tape.constant(single_row(attr_features)), tape.constant(single_row(portrait)))
      .value();
}

Tensor encode_edge(double distance_m, const ParamStore& params, const BackboneConfig& cfg) {
  Tape tape;
  const double d[] = {distance_m};
  return edge_embedding(tape, params, cfg, d).value();
}

Tensor mpnn_aggregate(const Tensor& p_self, const Tensor& p_neighbors, const Tensor& edges, const ParamStore& params,
                      const BackboneConfig& cfg, std::size_t round) {
  const std::size_t width = round == 0 ? 2 * cfg.hidden : cfg.hidden;
  require_width(p_self.cols(), width, "mpnn_aggregate self embedding");
  if (p_self.rows() != 1) throw ConfigError("mpnn_aggregate: self embedding must be a single row");
  const std::size_t n = p_neighbors.empty() ? 0 : p_neighbors.rows();
  if (n > 0) {
    require_width(p_neighbors.cols(), width, "mpnn_aggregate neighbor embeddings");
    if (edges.rows() != n) throw ConfigError("mpnn_aggregate: one edge embedding per neighbor required");
    require_width(edges.cols(), cfg.hidden, "mpnn_aggregate edge embeddings");
  }
  Tape tape;
  Var self = tape.constant(p_self);
  Var nb, e;
  if (n == 0) {
    nb = self;
    e = tape.constant(encode_edge(0.0, params, cfg));
  } else {
    nb = tape.constant(p_neighbors);
    e = tape.constant(edges);
  }
  const std::size_t rows = std::max<std::size_t>(n, 1);
  const Var parts[] = {ad::gather_rows(self, std::vector<std::size_t>(rows, 0)), nb, e};
  Var m = mlp_forward(tape, params, names::message_round(round), ad::concat_cols(parts), cfg.mlp_layers);
  return ad::segment_sum(m, std::vector<std::size_t>(rows, 0), 1).value();
}

Tensor encode_reports(std::span<const double> report_features, const ParamStore& params, const BackboneConfig& cfg) {
  require_width(report_features.size(), cfg.report_dim, "encode_reports");
  Tape tape;
  return mlp_forward(tape, params, groups::kReport, tape.constant(single_row(report_features)), cfg.mlp_layers).value();
}

Tensor fuse(const Tensor& o_reports, const Tensor& o_graph, const ParamStore& params, const BackboneConfig& cfg) {
  require_width(o_reports.cols(), cfg.hidden, "fuse report embedding");
  require_width(o_graph.cols(), cfg.hidden, "fuse graph embedding");
  Tape tape;
  return fusion(tape, params, cfg, tape.constant(o_reports), tape.constant(o_graph)).value();
}

Tensor backbone_forward(const Instance& instance, const ParamStore& params, const BackboneConfig& cfg,
                        const FeatureTable& features) {
  Tape tape;
  return backbone_forward(tape, params, cfg, features, std::span<const Instance>(&instance, 1)).value();
}

double regress(const Tensor& embedding, const ParamStore& head) {
  Tape tape;
  return ad::sigmoid(head_logits(tape, head, tape.constant(embedding))).value().item();
}

}  // namespace csst
