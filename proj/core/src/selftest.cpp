#include "fedaa/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "fedaa/ddpg.hpp"
#include "fedaa/datasets.hpp"
#include "fedaa/errors.hpp"
#include "fedaa/orchestrator.hpp"
#include "fedaa/selection.hpp"

namespace fedaa {

namespace {

// Returns an empty string on success, otherwise what went wrong.
using Check = std::function<std::string(std::uint64_t)>;

std::string simplex_actions(std::uint64_t seed) {
  DdpgConfig cfg;
  cfg.state_dim = 6;
  cfg.action_dim = 6;
  cfg.hidden = 32;
  Rng rng = make_rng(seed, SeedStream::kAgent);
  DdpgAgent agent(cfg, rng);
  std::normal_distribution<double> big(0.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(cfg.state_dim);
    for (double& v : s) v = big(rng);
    const auto a = agent.act(s, trial % 2 == 0, rng);
    double sum = 0.0;
    for (double v : a) {
      if (!(v >= 0.0)) return "negative or NaN action entry";
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) return "action sums to " + std::to_string(sum);
  }
  return {};
}

std::string soft_update(std::uint64_t seed) {
  DdpgConfig cfg;
  cfg.state_dim = 3;
  cfg.action_dim = 3;
  cfg.hidden = 8;
  cfg.epsilon_soft = 0.001;
  Rng rng = make_rng(seed, SeedStream::kAgent);
  DdpgAgent agent(cfg, rng);
  // main = 1, target = 0 -> target becomes exactly eps everywhere
  for (auto* m : {&agent.mutable_actor(), &agent.mutable_critic()}) {
    std::fill(m->params.values.begin(), m->params.values.end(), 1.0);
  }
  for (auto* m : {&agent.mutable_target_actor(), &agent.mutable_target_critic()}) {
    std::fill(m->params.values.begin(), m->params.values.end(), 0.0);
  }
  agent.soft_update();
  for (const auto* m : {&agent.target_actor(), &agent.target_critic()}) {
    for (double v : m->params.values) {
      if (std::abs(v - 0.001) > 1e-15) return "target entry " + std::to_string(v) + " != 0.001";
    }
  }
  agent.soft_update();
  const double expect = 0.001 + 0.999 * 0.001;
  if (std::abs(agent.target_actor().params.values[0] - expect) > 1e-15) return "second step off";
  return {};
}

std::string replay_fifo(std::uint64_t) {
  ReplayBuffer buf(4);
  for (int i = 0; i < 7; ++i) buf.push(Transition{{double(i)}, {1.0}, double(i), {double(i + 1)}});
  if (buf.size() != 4) return "size " + std::to_string(buf.size()) + " != 4";
  for (std::size_t k = 0; k < 4; ++k) {
    if (buf.entries()[k].reward != double(k + 3)) return "eviction order broken";
  }
  return {};
}

std::string partition_completeness(std::uint64_t seed) {
  Rng rng = make_rng(seed, SeedStream::kData);
  SyntheticSpec spec;
  spec.num_clients = 12;
  LabeledDataset pool = concat(draw_synthetic(spec, rng).samples);
  for (std::size_t i = 0; i < pool.origin.size(); ++i) pool.origin[i] = i;
  const auto parts = dirichlet_assign(pool, 7, 0.3, rng);
  std::vector<std::size_t> seen;
  for (const auto& p : parts) {
    if (p.size() < 2) return "client with fewer than 2 samples";
    seen.insert(seen.end(), p.origin.begin(), p.origin.end());
  }
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> want(pool.size());
  std::iota(want.begin(), want.end(), 0);
  if (seen != want) return "samples lost or duplicated";
  return {};
}

std::string distance_symmetry(std::uint64_t seed) {
  Rng rng = make_rng(seed, SeedStream::kModelInit);
  ArchSpec arch{5, {4}, 3, Activation::kRelu, OutputHead::kLogits};
  std::vector<Upload> uploads;
  for (int k = 0; k < 8; ++k) uploads.emplace_back(k, MlpModel::glorot(arch, rng).params);
  const Matrix d = distance_matrix(uploads, DistanceScope::kAllLayers);
  for (std::size_t i = 0; i < d.rows; ++i) {
    if (d.row(i)[i] != 0.0) return "non-zero diagonal";
    for (std::size_t j = 0; j < d.cols; ++j) {
      if (d.row(i)[j] != d.row(j)[i]) return "asymmetric entry";
      if (d.row(i)[j] < 0.0) return "negative distance";
    }
  }
  return {};
}

std::string convex_hull_aggregation(std::uint64_t seed) {
  Rng rng = make_rng(seed, SeedStream::kModelInit);
  ArchSpec arch{4, {}, 3, Activation::kRelu, OutputHead::kLogits};
  std::vector<FlatParams> uploads;
  for (int k = 0; k < 5; ++k) uploads.push_back(MlpModel::glorot(arch, rng).params);
  std::gamma_distribution<double> g(1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(uploads.size());
    for (double& v : a) v = g(rng);
    const double s = std::accumulate(a.begin(), a.end(), 0.0);
    for (double& v : a) v /= s;
    const FlatParams agg = aggregate(uploads, a);
    for (std::size_t i = 0; i < agg.values.size(); ++i) {
      double lo = uploads[0].values[i], hi = lo;
      for (const auto& u : uploads) lo = std::min(lo, u.values[i]), hi = std::max(hi, u.values[i]);
      if (agg.values[i] < lo - 1e-12 || agg.values[i] > hi + 1e-12) return "aggregate left the hull";
    }
  }
  // identical uploads -> that upload
  std::vector<FlatParams> same(3, uploads[0]);
  const std::vector<double> a{0.2, 0.5, 0.3};
  const FlatParams agg = aggregate(same, a);
  for (std::size_t i = 0; i < agg.values.size(); ++i) {
    if (std::abs(agg.values[i] - uploads[0].values[i]) > 1e-12) return "identical uploads not reproduced";
  }
  return {};
}

}  // namespace

std::vector<CheckResult> run_selftest(std::uint64_t seed) {
  const std::vector<std::pair<std::string, Check>> checks = {
      {"simplex_actions", simplex_actions},
      {"soft_update", soft_update},
      {"replay_fifo", replay_fifo},
      {"partition_completeness", partition_completeness},
      {"distance_symmetry", distance_symmetry},
      {"convex_hull_aggregation", convex_hull_aggregation},
  };
  std::vector<CheckResult> out;
  for (const auto& [name, fn] : checks) {
    CheckResult r{name, false, {}};
    try {
      r.detail = fn(seed);
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = std::string("threw: ") + e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fedaa
