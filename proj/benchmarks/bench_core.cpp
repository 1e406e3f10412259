#include "pricegrid/harness.hpp"

#include <benchmark/benchmark.h>

using namespace pricegrid;

namespace {

const PreparedRun& paper_run()
{
    static const PreparedRun prepared = prepare(builtin_paper_case());
    return prepared;
}

void BM_PowerFlows(benchmark::State& state)
{
    const auto& p = paper_run();
    const auto& x = p.initial.state.plant;
    for (auto _ : state) {
        benchmark::DoNotOptimize(power_flows(x.theta, x.voltages(), p.model.network));
    }
}
BENCHMARK(BM_PowerFlows);

void BM_ClosedLoopRhs(benchmark::State& state)
{
    const auto& p = paper_run();
    for (auto _ : state) {
        benchmark::DoNotOptimize(closed_loop_rhs(p.model, p.initial.state));
    }
}
BENCHMARK(BM_ClosedLoopRhs);

void BM_BlockRhs(benchmark::State& state)
{
    const auto& p = paper_run();
    for (auto _ : state) {
        benchmark::DoNotOptimize(block_rhs(p.model, p.initial.state));
    }
}
BENCHMARK(BM_BlockRhs);

void BM_Rk4Step(benchmark::State& state)
{
    const auto& p = paper_run();
    ClosedLoopModel model = p.model;
    model.p_load(5) += 0.1;
    const IntegratorConfig config;
    for (auto _ : state) {
        benchmark::DoNotOptimize(step(model, p.initial.state, config.step, config));
    }
}
BENCHMARK(BM_Rk4Step);

void BM_SolveEquilibrium(benchmark::State& state)
{
    const auto& p = paper_run();
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_equilibrium(p.problem));
    }
}
BENCHMARK(BM_SolveEquilibrium);

void BM_Simulate10s(benchmark::State& state)
{
    SimulationSetup setup = paper_run().setup;
    setup.horizon = 10.0;
    setup.events = {StepLoad{1.0, 6, 0.1}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(simulate(setup));
    }
}
BENCHMARK(BM_Simulate10s)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
