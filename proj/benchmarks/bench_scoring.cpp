#include <benchmark/benchmark.h>

#include "flywheel/interface.hpp"

using namespace flywheel;

namespace {

struct Fixture {
  ToyWorld world = make_world(preset_world("two-ridges", 7));
  ExpertDataset data = world.sample_expert(200, 0.2, 7);
  NegativeSet train = sample_negatives(world.domain(), data, NegativeStrategy::uniform, 200, Rng::derive(7, 1));
  NegativeSet holdout = sample_negatives(world.domain(), data, NegativeStrategy::uniform, 200, Rng::derive(7, 2));
  TrainConfig cfg() const {
    TrainConfig c;
    c.seed = 7;
    return c;
  }
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

void BM_FitRbf(benchmark::State& state) {
  const auto& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(fit(ScorerKind::rbf, f.data, f.train, f.holdout, f.cfg()));
}
BENCHMARK(BM_FitRbf)->Unit(benchmark::kMillisecond);

void BM_FitRecon(benchmark::State& state) {
  const auto& f = fx();
  auto cfg = f.cfg();
  cfg.epochs = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit(ScorerKind::recon, f.data, f.train, f.holdout, cfg));
}
BENCHMARK(BM_FitRecon)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

// Reward evaluation as anchors accumulate through patches.
void BM_RewardRbf(benchmark::State& state) {
  const auto& f = fx();
  RewardArtifact a;
  a.scorer = fit(ScorerKind::rbf, f.data, f.train, f.holdout, f.cfg());
  a.domain = f.world.domain();
  Rng rng(1);
  for (int i = 0; i < state.range(0); ++i)
    a.scorer = add_anchor(a.scorer, Anchor{StateVec({rng.uniform(), rng.uniform()}), -1.0, 0.2});
  std::vector<StateVec> qs;
  for (int i = 0; i < 1024; ++i) qs.push_back(StateVec({rng.uniform(), rng.uniform()}));
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(reward(a, qs[i++ & 1023]));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RewardRbf)->Arg(0)->Arg(100)->Arg(1000);

void BM_ApplyMapping(benchmark::State& state) {
  const auto psi = sculpt(MappingParams::logistic(0.5, 12.0), SuppressBelow{0.3});
  int i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_mapping(psi, i / 1000.0));
    i = i == 1000 ? 0 : i + 1;
  }
}
BENCHMARK(BM_ApplyMapping);

void BM_Heatmap(benchmark::State& state) {
  const auto& f = fx();
  RewardArtifact a;
  a.scorer = fit(ScorerKind::rbf, f.data, f.train, f.holdout, f.cfg());
  a.domain = f.world.domain();
  const auto res = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(heatmap(a, res));
}
BENCHMARK(BM_Heatmap)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_UnsafeMass(benchmark::State& state) {
  const auto& f = fx();
  RewardArtifact a;
  a.scorer = fit(ScorerKind::rbf, f.data, f.train, f.holdout, f.cfg());
  a.domain = f.world.domain();
  const RewardFn fn = [&a](const StateVec& x) { return reward(a, x); };
  for (auto _ : state) benchmark::DoNotOptimize(f.world.unsafe_reward_mass(fn, 10000, 3));
}
BENCHMARK(BM_UnsafeMass)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
