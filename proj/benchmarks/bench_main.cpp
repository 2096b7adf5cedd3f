#include <benchmark/benchmark.h>

#include "csst/augment.hpp"
#include "csst/contrastive.hpp"
#include "csst/dataset.hpp"
#include "csst/finetune.hpp"

using namespace csst;

namespace {

struct City {
  Dataset ds;
  AttributedGraph graph;
  FeatureTable table;
  AugmentationIndex index;
};

const City& city() {
  static const City c = [] {
    City out;
    out.ds = generate_synthetic(SynthConfig{});
    out.graph = build_graph(out.ds.pois, 20, 500.0);
    out.table = FeatureTable::build(out.graph, FeatureScaler::fit(out.ds.pois));
    out.index = build_index(out.ds.pois, 10, 10);
    return out;
  }();
  return c;
}

BackboneConfig backbone(Variant v) {
  BackboneConfig b;
  b.variant = v;
  b.attr_dim = city().ds.pois.front().attributes.size();
  b.portrait_dim = city().ds.layout.size();
  b.report_dim = city().ds.intervals;
  return b;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = Tensor::matrix(n, n), b = Tensor::matrix(n, n);
  for (double& v : a.data()) v = rng.normal();
  for (double& v : b.data()) v = rng.normal();
  for (auto _ : state) {
    ad::Tape tape;
    benchmark::DoNotOptimize(ad::matmul(tape.constant(a), tape.constant(b)).value());
  }
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Sinkhorn(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  const auto K = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  Tensor s = Tensor::matrix(B, K);
  for (double& v : s.data()) v = rng.uniform(-1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn_codes(s, 3, 0.05));
}
BENCHMARK(BM_Sinkhorn)->Args({64, 128})->Args({5376, 128});

void BM_BuildGraph(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(city().ds.pois, 20, 500.0));
}
BENCHMARK(BM_BuildGraph)->Unit(benchmark::kMillisecond);

// Forward and backward of one batch of 64 instances through a backbone.
void BM_BackboneBatch(benchmark::State& state) {
  const BackboneConfig cfg = backbone(static_cast<Variant>(state.range(0)));
  Rng rng(3);
  const ParamStore p = init_backbone(cfg, rng);
  const auto instances = build_instances(city().graph, cfg);
  std::vector<Instance> batch(instances.begin(), instances.begin() + 64);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var y = ad::sum(backbone_forward(tape, p, cfg, city().table, batch));
    benchmark::DoNotOptimize(tape.grad(y, p));
  }
  state.SetLabel(to_string(cfg.variant));
}
BENCHMARK(BM_BackboneBatch)
    ->Arg(static_cast<int>(Variant::Mlp))
    ->Arg(static_cast<int>(Variant::MsfNet))
    ->Arg(static_cast<int>(Variant::Stgnn))
    ->Unit(benchmark::kMillisecond);

// One pretraining step at the default batch size and positive count.
void BM_PretrainStep(benchmark::State& state) {
  PretrainConfig cfg;
  cfg.max_steps = 1;
  const BackboneConfig bcfg = backbone(static_cast<Variant>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(pretrain(city().graph, city().table, city().index, bcfg, cfg, ++seed));
  state.SetLabel(to_string(bcfg.variant));
}
BENCHMARK(BM_PretrainStep)
    ->Arg(static_cast<int>(Variant::MsfNet))
    ->Arg(static_cast<int>(Variant::Stgnn))
    ->Unit(benchmark::kMillisecond)
    ->Iterations(3);

}  // namespace
BENCHMARK_MAIN();
