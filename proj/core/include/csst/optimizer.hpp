#pragma once

#include <string>
#include <utility>
#include <vector>

#include "csst/params.hpp"

namespace csst {

enum class OptimizerKind { Sgd, Adam };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  // Divides the learning rate of backbone groups during fine-tuning (>= 1).
  double lr_divisor = 10.0;
  // Adam moments; unused by plain SGD.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Learning-rate divisors keyed by parameter-name prefix. The longest
/// matching prefix wins; unmatched names use divisor 1.
class GroupDivisors {
 public:
  GroupDivisors() = default;
  GroupDivisors(std::initializer_list<std::pair<std::string, double>> entries);

  void set(std::string prefix, double divisor);
  double divisor_for(const std::string& name) const;

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

/// One plain SGD step: t <- t - (lr / divisor) * (g + weight_decay * t).
/// Throws NumericError on name/shape mismatch or non-finite gradients.
ParamStore sgd_step(const ParamStore& params, const GradStore& grads, const OptimizerConfig& cfg,
                    const GroupDivisors& divisors = {});

/// Stateful optimizer applying `cfg.kind` in place. Parameters without a
/// gradient entry are left untouched.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg, GroupDivisors divisors = {});

  void step(ParamStore& params, const GradStore& grads);
  const OptimizerConfig& config() const noexcept { return cfg_; }
  long steps() const noexcept { return steps_; }

 private:
  OptimizerConfig cfg_;
  GroupDivisors divisors_;
  ParamStore first_moment_;
  ParamStore second_moment_;
  long steps_ = 0;
};

}  // namespace csst
