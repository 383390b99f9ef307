#include <benchmark/benchmark.h>

#include <random>

#include "fedaa/clients.hpp"
#include "fedaa/ddpg.hpp"
#include "fedaa/nn.hpp"
#include "fedaa/selection.hpp"

using namespace fedaa;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data) v = u(rng);
  return m;
}

// 784-100-10 client network on a batch of 64
void BM_ForwardBackward(benchmark::State& state) {
  Rng rng(1);
  const ArchSpec arch{784, {100}, 10};
  const MlpModel model = MlpModel::glorot(arch, rng);
  const Matrix x = random_batch(64, arch.input_dim, rng);
  std::vector<int> y(64);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 10);
  for (auto _ : state) benchmark::DoNotOptimize(backward_ce(model, x, y));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ForwardBackward);

void BM_DistanceMatrix(benchmark::State& state) {
  Rng rng(2);
  const ArchSpec arch{784, {100}, 10};
  std::vector<Upload> uploads;
  for (int k = 0; k < state.range(0); ++k) uploads.emplace_back(k, attack_gaussian(arch, 1.0, rng));
  for (auto _ : state) benchmark::DoNotOptimize(select_clients(uploads, 30, DistanceScope::kAllLayers));
}
BENCHMARK(BM_DistanceMatrix)->Arg(20)->Arg(100);

void BM_DdpgUpdate(benchmark::State& state) {
  Rng rng(3);
  DdpgConfig cfg;
  cfg.state_dim = static_cast<std::size_t>(state.range(0));
  cfg.action_dim = cfg.state_dim;
  DdpgAgent agent(cfg, rng);
  ReplayBuffer buffer(cfg.replay_capacity);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> s(cfg.state_dim), s2(cfg.state_dim);
    for (double& v : s) v = u(rng);
    for (double& v : s2) v = u(rng);
    buffer.push({s, agent.act(s, true, rng), u(rng), s2});
  }
  for (auto _ : state) {
    const auto batch = buffer.sample(cfg.batch_size, rng);
    agent.update_critic(batch);
    agent.update_actor(batch);
    agent.soft_update();
  }
}
BENCHMARK(BM_DdpgUpdate)->Arg(6)->Arg(30);

}  // namespace

BENCHMARK_MAIN();
