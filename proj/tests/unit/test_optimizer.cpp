#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "csst/error.hpp"
#include "csst/optimizer.hpp"

using namespace csst;

namespace {

ParamStore one(const std::string& name, double v) {
  ParamStore p;
  p.set(name, Tensor::scalar(v));
  return p;
}

}  // namespace

TEST(SgdStep, HandArithmetic) {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  const ParamStore out = sgd_step(one("w", 1.0), one("w", 0.5), cfg);
  EXPECT_DOUBLE_EQ(out.at("w").item(), 0.95);
}

TEST(SgdStep, ZeroGradientWithoutDecayIsIdentity) {
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  EXPECT_EQ(sgd_step(one("w", 0.37), one("w", 0.0), cfg), one("w", 0.37));
}

TEST(SgdStep, ZeroLearningRateIsIdentity) {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_EQ(sgd_step(one("w", -2.5), one("w", 3.0), cfg), one("w", -2.5));
}

TEST(SgdStep, WeightDecayAddsToGradient) {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.weight_decay = 0.1;
  // 2 - 0.5 * (1 + 0.1 * 2)
  EXPECT_DOUBLE_EQ(sgd_step(one("w", 2.0), one("w", 1.0), cfg).at("w").item(), 1.4);
}

TEST(SgdStep, BackboneDivisorScalesStep) {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.001;
  cfg.weight_decay = 0.0;
  ParamStore p, g;
  p.set("f_a/layer0/W", Tensor::scalar(0.0));
  p.set("f_o/layer0/W", Tensor::scalar(0.0));
  g.set("f_a/layer0/W", Tensor::scalar(1.0));
  g.set("f_o/layer0/W", Tensor::scalar(1.0));
  const ParamStore out = sgd_step(p, g, cfg, GroupDivisors{{"f_a/", 10.0}});
  EXPECT_NEAR(out.at("f_a/layer0/W").item(), -0.0001, 1e-18);
  EXPECT_NEAR(out.at("f_o/layer0/W").item(), -0.001, 1e-18);
}

TEST(SgdStep, RejectsMismatchedOrNonFiniteGradients) {
  OptimizerConfig cfg;
  ParamStore p = one("w", 1.0);
  ParamStore wrong_shape;
  wrong_shape.set("w", Tensor::matrix(1, 2));
  EXPECT_THROW(sgd_step(p, wrong_shape, cfg), NumericError);
  EXPECT_THROW(sgd_step(p, one("v", 1.0), cfg), ConfigError);
  EXPECT_THROW(sgd_step(p, one("w", std::numeric_limits<double>::infinity()), cfg), NumericError);
}

TEST(OptimizerConfig, Validation) {
  OptimizerConfig cfg;
  cfg.lr_divisor = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.lr_divisor = 10.0;
  cfg.learning_rate = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(GroupDivisors, LongestPrefixWins) {
  GroupDivisors d{{"f_g/", 10.0}, {"f_g/r0/", 4.0}};
  EXPECT_EQ(d.divisor_for("f_g/r0/layer0/W"), 4.0);
  EXPECT_EQ(d.divisor_for("f_g/r1/layer0/W"), 10.0);
  EXPECT_EQ(d.divisor_for("f_o/layer0/W"), 1.0);
}

TEST(Optimizer, SgdMatchesFreeFunction) {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.2;
  Optimizer opt(cfg);
  ParamStore p = one("w", 1.0);
  opt.step(p, one("w", 0.3));
  EXPECT_EQ(p, sgd_step(one("w", 1.0), one("w", 0.3), cfg));
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Adam;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.0;
  Optimizer opt(cfg);
  ParamStore p = one("w", 1.0);
  opt.step(p, one("w", 123.0));
  // Bias-corrected first step is lr * g / |g|.
  EXPECT_NEAR(p.at("w").item(), 0.99, 1e-9);
}

TEST(Optimizer, MissingGradientLeavesParameter) {
  OptimizerConfig cfg;
  Optimizer opt(cfg);
  ParamStore p = one("w", 1.0);
  p.set("frozen", Tensor::scalar(5.0));
  opt.step(p, one("w", 1.0));
  EXPECT_EQ(p.at("frozen").item(), 5.0);
}

TEST(Optimizer, IdenticalInputsGiveIdenticalTrajectories) {
  auto run = [] {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Adam;
    Optimizer opt(cfg);
    ParamStore p = one("w", 0.1);
    for (int i = 0; i < 50; ++i) opt.step(p, one("w", std::sin(p.at("w").item() * 3.0 + i)));
    return p;
  };
  EXPECT_EQ(run(), run());
}
