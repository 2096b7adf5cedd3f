#include "csst/optimizer.hpp"

#include <cmath>

#include "csst/error.hpp"

namespace csst {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be finite and non-negative");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be non-negative");
  if (!(lr_divisor >= 1.0)) throw ConfigError("lr_divisor must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

GroupDivisors::GroupDivisors(std::initializer_list<std::pair<std::string, double>> entries) {
  for (const auto& [prefix, d] : entries) set(prefix, d);
}

void GroupDivisors::set(std::string prefix, double divisor) {
  if (!(divisor >= 1.0)) throw ConfigError("group divisor must be >= 1 for prefix '" + prefix + "'");
  for (auto& [p, d] : entries_) {
    if (p == prefix) {
      d = divisor;
      return;
    }
  }
  entries_.emplace_back(std::move(prefix), divisor);
}

double GroupDivisors::divisor_for(const std::string& name) const {
  double best = 1.0;
  std::size_t best_len = 0;
  bool found = false;
  for (const auto& [p, d] : entries_) {
    if (name.starts_with(p) && (!found || p.size() > best_len)) {
      best = d;
      best_len = p.size();
      found = true;
    }
  }
  return best;
}

namespace {

const Tensor& matching_grad(const GradStore& grads, const std::string& name, const Tensor& param) {
  const Tensor& g = grads.at(name);
  if (!g.same_shape(param)) {
    throw NumericError("gradient shape " + shape_string(g.shape()) + " does not match parameter '" + name + "' " +
                       shape_string(param.shape()));
  }
  g.require_finite("gradient of " + name);
  return g;
}

}  // namespace

ParamStore sgd_step(const ParamStore& params, const GradStore& grads, const OptimizerConfig& cfg,
                    const GroupDivisors& divisors) {
  cfg.validate();
  if (grads.size() != params.size()) throw NumericError("gradient store does not align with parameters");
  ParamStore out = params;
  for (auto& [name, t] : out) {
    const Tensor& g = matching_grad(grads, name, t);
    const double step = cfg.learning_rate / divisors.divisor_for(name);
    auto v = t.data();
    const auto gv = g.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= step * (gv[i] + cfg.weight_decay * v[i]);
  }
  return out;
}

Optimizer::Optimizer(OptimizerConfig cfg, GroupDivisors divisors) : cfg_(cfg), divisors_(std::move(divisors)) {
  cfg_.validate();
}

void Optimizer::step(ParamStore& params, const GradStore& grads) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (auto& [name, t] : params) {
    if (!grads.contains(name)) continue;
    const Tensor& g = matching_grad(grads, name, t);
    const double lr = cfg_.learning_rate / divisors_.divisor_for(name);
    auto v = t.data();
    const auto gv = g.data();
    if (cfg_.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * (gv[i] + cfg_.weight_decay * v[i]);
      continue;
    }
    if (!first_moment_.contains(name)) {
      first_moment_.set(name, Tensor(t.shape(), 0.0));
      second_moment_.set(name, Tensor(t.shape(), 0.0));
    }
    auto m = first_moment_.at(name).data();
    auto s = second_moment_.at(name).data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double gi = gv[i] + cfg_.weight_decay * v[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      s[i] = cfg_.beta2 * s[i] + (1.0 - cfg_.beta2) * gi * gi;
      v[i] -= lr * (m[i] / bc1) / (std::sqrt(s[i] / bc2) + cfg_.epsilon);
    }
  }
}

}  // namespace csst
