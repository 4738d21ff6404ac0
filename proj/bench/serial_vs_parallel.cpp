// Serial reference vs OpenMP path for the hot kernels. Arg 0 = serial, 1 = parallel.
#include <benchmark/benchmark.h>

#include <random>

#include "dropcast/nn/kernels.hpp"
#include "dropcast/synthgen.hpp"
#include "dropcast/train.hpp"

using namespace dropcast;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

synth::PopulationConfig population_config(int n) {
  synth::PopulationConfig c;
  c.n_beneficiaries = n;
  c.horizon_weeks = 26;
  c.seed = 3;
  return c;
}

const pipeline::Dataset& short_dataset() {
  static const pipeline::Dataset ds = [] {
    auto pop = synth::generate(population_config(600));
    std::vector<ProfileCandidate> profiles;
    for (const auto& p : pop.profiles) profiles.push_back(ProfileCandidate::from(p));
    return pipeline::build_dataset(dedup_best_outcome(pop.calls), profiles, Task::short_term,
                                   pipeline::PipelineConfig{}, 3);
  }();
  return ds;
}

constexpr int kRows = 256, kInner = 128, kCols = 128;

void BM_Affine(benchmark::State& state) {
  auto x = noise(kRows * kInner, 1), w = noise(kInner * kCols, 2), b = noise(kCols, 3);
  std::vector<double> y(kRows * kCols);
  for (auto _ : state) {
    nn::kernels::affine(exec_of(state), x, w, b, y, kRows, kInner, kCols);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_BackpropInput(benchmark::State& state) {
  auto dy = noise(kRows * kCols, 4), w = noise(kInner * kCols, 5);
  std::vector<double> dx(kRows * kInner);
  for (auto _ : state) {
    nn::kernels::backprop_input(exec_of(state), dy, w, dx, kRows, kInner, kCols);
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_WeightGrad(benchmark::State& state) {
  auto x = noise(kRows * kInner, 6), dy = noise(kRows * kCols, 7);
  std::vector<double> dw(kInner * kCols), db(kCols);
  for (auto _ : state) {
    nn::kernels::accumulate_weight_grad(exec_of(state), x, dy, dw, db, kRows, kInner, kCols);
    benchmark::DoNotOptimize(dw.data());
  }
}

void BM_ForwardBackward(benchmark::State& state, nn::Arch arch) {
  const auto& ds = short_dataset();
  nn::Network net(nn::NetConfig::for_task(arch, ds.task, ds.static_width, ds.max_len), 1);
  std::vector<const pipeline::WindowSample*> batch;
  std::vector<int> labels;
  for (std::size_t i = 0; i < ds.samples.size() && batch.size() < 64; ++i) {
    batch.push_back(&ds.samples[i]);
    labels.push_back(ds.samples[i].label);
  }
  for (auto _ : state) benchmark::DoNotOptimize(net.forward_backward(batch, labels, {1.0, 1.0}, exec_of(state)));
}

void BM_ForestFit(benchmark::State& state) {
  const auto& ds = short_dataset();
  std::vector<const pipeline::WindowSample*> samples;
  std::vector<int> labels;
  for (const auto& s : ds.samples) {
    samples.push_back(&s);
    labels.push_back(s.label);
  }
  const auto x = train::demographic_matrix(ds, samples);
  auto cfg = forest::ForestConfig::for_task(ds.task);
  cfg.n_trees = 32;
  for (auto _ : state) benchmark::DoNotOptimize(forest::Forest::fit(x, labels, cfg, exec_of(state)));
}

void BM_Generate(benchmark::State& state) {
  const auto cfg = population_config(1000);
  for (auto _ : state) benchmark::DoNotOptimize(synth::generate(cfg, exec_of(state)));
}

}  // namespace

BENCHMARK(BM_Affine)->ArgName("parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_BackpropInput)->ArgName("parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_WeightGrad)->ArgName("parallel")->Arg(0)->Arg(1);
BENCHMARK_CAPTURE(BM_ForwardBackward, condip, nn::Arch::condip)->ArgName("parallel")->Arg(0)->Arg(1);
BENCHMARK_CAPTURE(BM_ForwardBackward, rendip, nn::Arch::rendip)->ArgName("parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_ForestFit)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Generate)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
