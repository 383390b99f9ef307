#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "fedaa/errors.hpp"
#include "fedaa/orchestrator.hpp"

using namespace fedaa;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.num_clients = 8;
  cfg.rounds = 3;
  cfg.local.epochs = 2;
  cfg.ddpg.hidden = 16;
  cfg.m_percent = 50;
  cfg.seed = 7;
  return cfg;
}

LabeledDataset tiny_set(std::vector<int> labels, int classes) {
  LabeledDataset d;
  d.num_classes = classes;
  d.features = Matrix(labels.size(), 1, 1.0);
  d.labels = std::move(labels);
  return d;
}

}  // namespace

TEST_CASE("aggregate") {
  const ArchSpec arch{1, {}, 1};
  const std::vector<FlatParams> two{{{1, 1}, arch}, {{3, 3}, arch}};
  CHECK(aggregate(two, std::vector<double>{0.5, 0.5}).values == std::vector<double>{2, 2});
  CHECK(aggregate(two, std::vector<double>{1.0, 0.0}) == two[0]);
  const std::vector<FlatParams> one{{{4, -2}, arch}};
  CHECK(aggregate(one, std::vector<double>{1.0}) == one[0]);
  CHECK_THROWS_AS(aggregate(two, std::vector<double>{0.7, 0.7}), SimulationError);
  CHECK_THROWS_AS(aggregate(two, std::vector<double>{1.0}), ConfigError);
}

TEST_CASE("reward evaluation") {
  SUBCASE("constant predictor on a balanced set") {
    // logistic with bias pushing class 3
    const ArchSpec arch{1, {}, 10};
    FlatParams p{std::vector<double>(param_count(arch), 0.0), arch};
    p.values[layer_slice(arch, 0).bias_offset + 3] = 1.0;
    std::vector<int> labels;
    for (int c = 0; c < 10; ++c) labels.insert(labels.end(), 5, c);
    const auto r = evaluate_reward(p, tiny_set(labels, 10));
    CHECK(r.reward == doctest::Approx(0.1));
    for (int c = 0; c < 10; ++c) CHECK(r.per_class_acc[c] == (c == 3 ? 1.0 : 0.0));
    double mean = 0.0;
    for (double a : r.per_class_acc) mean += a / 10.0;
    CHECK(mean == doctest::Approx(r.reward));
  }
  SUBCASE("perfect model and absent classes") {
    const ArchSpec arch{1, {}, 3};
    FlatParams p{std::vector<double>(param_count(arch), 0.0), arch};
    p.values[layer_slice(arch, 0).bias_offset + 1] = 1.0;
    const auto r = evaluate_reward(p, tiny_set({1, 1, 1}, 3));
    CHECK(r.reward == 1.0);
    CHECK(r.per_class_acc == std::vector<double>{0.0, 1.0, 0.0});
  }
}

TEST_CASE("fairness statistics") {
  const std::vector<double> acc{0.8, 1.0}, loss{0.5, 0.5};
  const auto s = fairness_stats(acc, loss);
  CHECK(s.mean_acc == doctest::Approx(0.9));
  CHECK(s.acc_std == doctest::Approx(0.1));
  CHECK(s.acc_var == doctest::Approx(0.01));
  CHECK(s.loss_std == 0.0);
  const std::vector<double> acc3{0.8, 1.0, 0.9}, loss3{0.5, 0.5, 0.5};
  CHECK(fairness_stats(acc3, loss3).mean_acc == doctest::Approx(0.9));
}

TEST_CASE("participant sampling") {
  Rng rng(1);
  const auto all = sample_participants(10, 1.0, rng);
  CHECK(all.size() == 10);
  CHECK(std::is_sorted(all.begin(), all.end()));
  const auto half = sample_participants(100, 0.5, rng);
  CHECK(std::set<int>(half.begin(), half.end()).size() == 50);
  Rng a(5), b(5);
  CHECK(sample_participants(30, 0.3, a) == sample_participants(30, 0.3, b));
  CHECK_THROWS_AS(sample_participants(10, 0.01, rng), ConfigError);
}

TEST_CASE("experiment data keeps validation disjoint") {
  for (ValidationMode mode : {ValidationMode::kUpload, ValidationMode::kPerClass}) {
    ExperimentConfig cfg = small_config();
    cfg.num_clients = 20;
    cfg.validation.mode = mode;
    cfg.validation.pool_per_class = 20;
    const auto data = build_experiment_data(cfg);
    CHECK(data.partition.clients.size() == cfg.num_clients);
    CHECK(data.validation.size() > 0);
    std::set<std::size_t> val(data.validation.origin.begin(), data.validation.origin.end());
    for (const auto& c : data.partition.clients) {
      for (auto o : c.train.origin) CHECK(val.count(o) == 0);
      for (auto o : c.test.origin) CHECK(val.count(o) == 0);
    }
  }
}

TEST_CASE("run_experiment contracts") {
  SUBCASE("one round, all benign") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 1;
    const auto rec = run_experiment(cfg);
    REQUIRE(rec.size() == 1);
    CHECK(rec[0].reward >= 0.0);
    CHECK(rec[0].reward <= 1.0);
    CHECK(rec[0].action.size() == rec[0].selected_ids.size());
    double sum = 0.0;
    for (double a : rec[0].action) sum += a;
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  SUBCASE("every round emits one record with consistent shapes") {
    ExperimentConfig cfg = small_config();
    cfg.malicious_fraction = 0.25;
    cfg.attack = AttackSpec::with_defaults(AttackKind::kGaussian);
    std::size_t seen = 0;
    RunHooks hooks;
    hooks.on_round = [&](const RoundRecord& r) { CHECK(r.round == seen++); };
    const auto rec = run_experiment(cfg, hooks);
    CHECK(rec.size() == cfg.rounds);
    CHECK(seen == cfg.rounds);
    for (const auto& r : rec) {
      CHECK(r.selected_ids.size() == selection_count(cfg.m_percent, cfg.num_clients));
      CHECK(r.action.size() == r.selected_ids.size());
      CHECK(r.per_class_val_acc.size() == 10);
    }
  }
  SUBCASE("bit-identical reruns, also with worker threads") {
    ExperimentConfig cfg = small_config();
    cfg.malicious_fraction = 0.25;
    cfg.attack = AttackSpec::with_defaults(AttackKind::kIpm);
    const auto a = run_experiment(cfg);
    RunHooks threaded;
    threaded.threads = 3;
    const auto b = run_experiment(cfg, threaded);
    CHECK(a == b);
  }
  SUBCASE("partial participation and last-hidden-layer scope") {
    ExperimentConfig cfg = small_config();
    cfg.participation = 0.5;
    cfg.hidden_dims = {8};
    cfg.distance_scope = DistanceScope::kLastHiddenLayer;
    const auto rec = run_experiment(cfg);
    for (const auto& r : rec) CHECK(r.selected_ids.size() == selection_count(cfg.m_percent, 4));
  }
}

TEST_CASE("fedavg baseline") {
  ExperimentConfig cfg = small_config();
  cfg.rounds = 8;
  cfg.aggregator = Aggregator::kFedAvg;
  const auto rec = run(cfg);
  REQUIRE(rec.size() == 8);
  const auto data = build_experiment_data(cfg);
  double total = 0.0;
  for (const auto& c : data.partition.clients) total += static_cast<double>(c.train.size());
  for (std::size_t k = 0; k < rec[0].action.size(); ++k) {
    const auto id = static_cast<std::size_t>(rec[0].selected_ids[k]);
    CHECK(rec[0].action[k] == doctest::Approx(data.partition.clients[id].train.size() / total));
  }
  CHECK(rec.back().reward >= rec.front().reward);
}

TEST_CASE("config validation") {
  ExperimentConfig cfg;
  cfg.malicious_fraction = 0.6;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ExperimentConfig{};
  cfg.malicious_fraction = 0.2;  // attack missing
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
