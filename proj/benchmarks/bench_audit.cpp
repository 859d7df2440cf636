#include <benchmark/benchmark.h>

#include "flywheel/orchestrator.hpp"

using namespace flywheel;

namespace {

const Session& reference() {
  static const Session s = create_session(SessionConfig{});
  return s;
}

void BM_CreateSession(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(create_session(SessionConfig{}));
}
BENCHMARK(BM_CreateSession)->Unit(benchmark::kMillisecond);

void BM_RedTeam(benchmark::State& state) {
  const auto& s = reference();
  RedTeamConfig rc;
  rc.strategy = static_cast<RedTeamStrategy>(state.range(0));
  rc.budget = 2000;
  rc.seed = 3;
  for (auto _ : state)
    benchmark::DoNotOptimize(red_team_search(s.store.head_artifact(), s.constraints, s.judge(), rc, s.sfkb));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rc.budget));
}
BENCHMARK(BM_RedTeam)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_AuditPhase(benchmark::State& state) {
  const auto& s = reference();
  const auto cfgs = audit_configs(s.config, static_cast<std::size_t>(state.range(0)), 11);
  for (auto _ : state) {
    SFKB kb = s.sfkb;
    benchmark::DoNotOptimize(run_audit_phase(s.store.head_artifact(), s.constraints, s.judge(), cfgs, kb, s.ensemble));
  }
}
BENCHMARK(BM_AuditPhase)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_TriageOpen(benchmark::State& state) {
  auto base = reference();
  (void)audit(base, 5000, 11);
  for (auto _ : state) {
    auto s = base;
    benchmark::DoNotOptimize(triage_open(s));
  }
}
BENCHMARK(BM_TriageOpen)->Unit(benchmark::kMillisecond);

void BM_Cycle(benchmark::State& state) {
  for (auto _ : state) {
    state.PauseTiming();
    auto s = create_session(SessionConfig{});
    state.ResumeTiming();
    benchmark::DoNotOptimize(run_cycle(s, CycleMode::autonomous, 7));
  }
}
BENCHMARK(BM_Cycle)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
