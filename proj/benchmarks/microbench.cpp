#include <benchmark/benchmark.h>

#include <random>

#include "invbench/flows.hpp"
#include "invbench/metrics.hpp"
#include "invbench/nn.hpp"
#include "invbench/tasks.hpp"

using namespace invbench;

namespace {

ad::Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return ad::Tensor::matrix(rows, cols, std::move(v));
}

void BM_MlpForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  nn::Mlp net(nn::MlpSpec::make(32, {64, 64}, 2, nn::Activation::Relu, nn::Activation::Linear, false, 1));
  const auto x = random_matrix(batch, 32, 2);
  const auto y = random_matrix(batch, 2, 3);
  for (auto _ : state) {
    auto loss = ad::mean(ad::square(net.forward(x, nn::Mode::Train) - y));
    ad::backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(256)->Arg(1024);

void BM_Simulate(benchmark::State& state, const char* task) {
  const auto model = em::make_forward_model(task, {});
  const auto& spec = model->spec();
  std::mt19937_64 rng(4);
  std::vector<double> g(spec.design_dim);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::uniform_real_distribution<double>(spec.lower[i], spec.upper[i])(rng);
  for (auto _ : state) benchmark::DoNotOptimize(model->simulate(g));
}
BENCHMARK_CAPTURE(BM_Simulate, stack, "stack");
BENCHMARK_CAPTURE(BM_Simulate, shell, "shell");
BENCHMARK_CAPTURE(BM_Simulate, toy, "toy");

void BM_FlowForward(benchmark::State& state) {
  flows::FlowOptions o;
  o.width = 8;
  o.blocks = 4;
  o.hidden = {64, 64};
  flows::Flow flow(o);
  const auto x = random_matrix(256, 8, 5);
  for (auto _ : state) benchmark::DoNotOptimize(flow.forward(x).y.values().data());
}
BENCHMARK(BM_FlowForward);

void BM_RtFromErrors(benchmark::State& state) {
  const std::size_t targets = 500, t_max = 200;
  std::mt19937_64 rng(6);
  std::exponential_distribution<double> e;
  std::vector<double> errors(targets * t_max);
  for (auto& v : errors) v = e(rng);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::rt_from_errors(errors, targets, t_max).r.back());
}
BENCHMARK(BM_RtFromErrors);

}  // namespace
BENCHMARK_MAIN();
