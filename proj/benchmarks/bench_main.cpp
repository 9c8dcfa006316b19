// Throughput of the hot loops: word successors, noise-free outputs, the
// safety fixpoint, Euler-Maruyama sampling and Monte-Carlo labeling.

#include "stochsynth/io.hpp"
#include "stochsynth/mc_label.hpp"
#include "stochsynth/safety.hpp"
#include "stochsynth/sde.hpp"

#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

using namespace stochsynth;

namespace {

const std::filesystem::path kFixtures = STOCHSYNTH_FIXTURES;

const ProjectConfig& traffic() {
  static const ProjectConfig cfg = load_project(kFixtures / "traffic" / "project.json");
  return cfg;
}

const ProjectConfig& scalar() {
  static const ProjectConfig cfg = load_project(kFixtures / "scalar" / "project.json");
  return cfg;
}

AbstractionParams params_of(const ProjectConfig& cfg, std::size_t N) {
  AbstractionParams p;
  p.tau = cfg.tau;
  p.N = N;
  p.x_s = cfg.x_s;
  p.epsilon = cfg.epsilon;
  p.mode = cfg.mode;
  return p;
}

void BM_Successor(benchmark::State& st) {
  const WordCodec codec(3, static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    std::uint64_t acc = 0;
    for (std::uint64_t s = 0; s < codec.state_count(); ++s)
      for (std::size_t u = 0; u < 3; ++u) acc += codec.successor(s, u);
    benchmark::DoNotOptimize(acc);
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * codec.state_count() * 3));
}
BENCHMARK(BM_Successor)->Arg(10)->Arg(14);

void BM_NoiseFreeOutput(benchmark::State& st) {
  const ProjectConfig& cfg = traffic();
  const SymbolicModel sym(cfg.model, params_of(cfg, 14), quantize_input_set(cfg.model.inputs(), 0.0),
                          OutputKind::NoiseFree, 0.0);
  std::uint64_t s = 0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(sym.noise_free_output(s));
    s = (s + 7919) % sym.codec().state_count();
  }
  st.SetItemsProcessed(st.iterations());
}
BENCHMARK(BM_NoiseFreeOutput);

void BM_SafetyFixpoint(benchmark::State& st) {
  const std::size_t N = static_cast<std::size_t>(st.range(0));
  const WordCodec codec(3, N);
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.97);
  Bitset safe(codec.state_count());
  for (std::uint64_t s = 0; s < codec.state_count(); ++s)
    if (coin(rng)) safe.set(s);
  for (auto _ : st) benchmark::DoNotOptimize(solve_safety_game(codec, safe, 3));
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * codec.state_count()));
}
BENCHMARK(BM_SafetyFixpoint)->Arg(10)->Arg(14)->Unit(benchmark::kMillisecond);

void BM_EulerMaruyama(benchmark::State& st) {
  const ProjectConfig& cfg = traffic();
  const InputCurve curve = InputCurve::from_indices({}, cfg.reference_schedule,
                                                    quantize_input_set(cfg.model.inputs(), 0.0), cfg.tau);
  SimConfig sc;
  sc.dt = cfg.dt;
  sc.seed = cfg.seed;
  sc.samples = static_cast<std::size_t>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(simulate_sde(cfg.model, cfg.x0, curve, 14 * cfg.tau, sc));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_EulerMaruyama)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_LabelAllStates(benchmark::State& st) {
  const ProjectConfig& cfg = scalar();
  const AbstractionParams p = params_of(cfg, *cfg.search.pinned_N);
  SimConfig sc;
  sc.dt = cfg.dt;
  sc.seed = cfg.seed;
  for (auto _ : st) {
    const SymbolicModel sym(cfg.model, p, quantize_input_set(cfg.model.inputs(), 0.0), OutputKind::Probabilistic,
                            0.0, 16, sc);
    const MonteCarloLabeler labeler(sym, *cfg.labeling);
    std::size_t safe = 0;
    for (std::uint64_t s = 0; s < sym.codec().state_count(); ++s)
      safe += labeler.label(s, cfg.spec.safe_box()).label == Label::Safe;
    benchmark::DoNotOptimize(safe);
  }
}
BENCHMARK(BM_LabelAllStates)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
