#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"
#include "fedaa/ddpg.hpp"
#include "fedaa/errors.hpp"
#include "support/oracles.hpp"

using namespace fedaa;

namespace {

DdpgConfig tiny(std::size_t s = 3, std::size_t a = 3, std::size_t h = 5) {
  DdpgConfig c;
  c.state_dim = s;
  c.action_dim = a;
  c.hidden = h;
  return c;
}

std::vector<Transition> random_batch(const DdpgConfig& c, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Transition> out(n);
  for (auto& t : out) {
    t.state.resize(c.state_dim);
    t.next_state.resize(c.state_dim);
    t.action.resize(c.action_dim);
    for (double& v : t.state) v = u(rng);
    for (double& v : t.next_state) v = u(rng);
    double s = 0.0;
    for (double& v : t.action) s += (v = u(rng) + 0.05);
    for (double& v : t.action) v /= s;
    t.reward = u(rng);
  }
  return out;
}

void jitter(MlpModel& m, Rng& rng, double sd = 0.2) {
  std::normal_distribution<double> d(0.0, sd);
  for (double& v : m.params.values) v += d(rng);
}

}  // namespace

TEST_CASE("act stays on the simplex") {
  const DdpgConfig cfg = tiny(4, 6, 16);
  Rng rng(1);
  DdpgAgent agent(cfg, rng);
  SUBCASE("zero actor is uniform") {
    std::fill(agent.mutable_actor().params.values.begin(), agent.mutable_actor().params.values.end(), 0.0);
    const auto a = agent.act(std::vector<double>{1, 2, 3, 4}, false, rng);
    for (double v : a) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  }
  SUBCASE("greedy is deterministic, explored actions stay on the simplex") {
    const std::vector<double> s{0.1, 0.9, 0.3, 0.0};
    CHECK(agent.act(s, false, rng) == agent.act(s, false, rng));
    agent.set_noise_sigma(5.0);
    for (int i = 0; i < 100; ++i) {
      const auto a = agent.act(s, true, rng);
      double sum = 0.0;
      for (double v : a) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
  SUBCASE("state length mismatch") { CHECK_THROWS_AS(agent.act(std::vector<double>{1, 2}, false, rng), ConfigError); }
}

TEST_CASE("targets start as copies") {
  Rng rng(2);
  DdpgAgent agent(tiny(), rng);
  CHECK(agent.target_actor().params == agent.actor().params);
  CHECK(agent.target_critic().params == agent.critic().params);
  CHECK(agent.target_actor().arch() == agent.actor().arch());
}

TEST_CASE("critic target") {
  Rng rng(3);
  DdpgConfig cfg = tiny();
  SUBCASE("gamma 0 gives the reward") {
    cfg.gamma = 0.0;
    DdpgAgent agent(cfg, rng);
    const auto batch = random_batch(cfg, 4, rng);
    const auto y = agent.critic_target(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) CHECK(y[i] == batch[i].reward);
  }
  SUBCASE("zero target critic gives the reward") {
    DdpgAgent agent(cfg, rng);
    auto& tc = agent.mutable_target_critic().params.values;
    std::fill(tc.begin(), tc.end(), 0.0);
    const auto batch = random_batch(cfg, 4, rng);
    const auto y = agent.critic_target(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) CHECK(y[i] == batch[i].reward);
  }
  SUBCASE("hand-evaluated 1-transition batch") {
    // state 1-d, action 2-d, hidden 1: actor 1->1->2, critic 3->1->1
    DdpgConfig c = tiny(1, 2, 1);
    c.gamma = 0.5;
    DdpgAgent agent(c, rng);
    // target actor: h = relu(2 s + 0), logits = [h, -h] + [0, 0]
    agent.mutable_target_actor().params.values = {2.0, 0.0, 1.0, -1.0, 0.0, 0.0};
    // target critic: h = relu(1*s + 3*a0 - 1*a1 + 0.5), Q = 2 h - 1
    agent.mutable_target_critic().params.values = {1.0, 3.0, -1.0, 0.5, 2.0, -1.0};
    Transition t{{0.0}, {0.5, 0.5}, 0.25, {0.5}};
    const double h = 2.0 * 0.5;
    const double a0 = std::exp(h) / (std::exp(h) + std::exp(-h)), a1 = 1.0 - a0;
    const double hq = std::max(0.0, 0.5 + 3.0 * a0 - a1 + 0.5);
    const double want = 0.25 + 0.5 * (2.0 * hq - 1.0);
    const std::vector<Transition> batch{t};
    CHECK(agent.critic_target(batch)[0] == doctest::Approx(want).epsilon(1e-14));
    const FlatParams actor_before = agent.actor().params, critic_before = agent.critic().params;
    (void)agent.critic_target(batch);
    CHECK(agent.actor().params == actor_before);
    CHECK(agent.critic().params == critic_before);
  }
}

TEST_CASE("critic loss and update") {
  Rng rng(4);
  DdpgConfig cfg = tiny();
  DdpgAgent agent(cfg, rng);
  jitter(agent.mutable_critic(), rng);
  jitter(agent.mutable_target_critic(), rng);
  const auto batch = random_batch(cfg, 6, rng);

  SUBCASE("loss formula") {
    const auto y = agent.critic_target(batch);
    double want = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double r = y[i] - agent.q_value(batch[i].state, batch[i].action);
      want += r * r;
    }
    CHECK(agent.critic_loss(batch) == doctest::Approx(want / batch.size()).epsilon(1e-13));
  }
  SUBCASE("gradient vs central differences") {
    const auto g = agent.critic_loss_gradient(batch);
    auto f = [&](const std::vector<double>& p) {
      DdpgAgent copy = agent;
      copy.mutable_critic().params.values = p;
      return copy.critic_loss(batch);
    };
    std::mt19937_64 probe(5);
    const auto gc = fedaa::testing::check_gradient(f, agent.critic().params.values, g, 10000, probe);
    CHECK(gc.max_rel_error < 1e-4);
  }
  SUBCASE("update touches only the critic") {
    const DdpgAgent before = agent;
    const double loss = agent.update_critic(batch);
    CHECK(loss == doctest::Approx(before.critic_loss(batch)));
    CHECK(agent.critic().params != before.critic().params);
    CHECK(agent.actor().params == before.actor().params);
    CHECK(agent.target_actor().params == before.target_actor().params);
    CHECK(agent.target_critic().params == before.target_critic().params);
  }
  SUBCASE("zero residual: only weight decay moves the critic") {
    DdpgConfig c = tiny();
    c.gamma = 0.0;
    DdpgAgent a(c, rng);
    auto batch1 = random_batch(c, 1, rng);
    batch1[0].reward = a.q_value(batch1[0].state, batch1[0].action);
    const auto theta = a.critic().params.values;
    CHECK(a.update_critic(batch1) == doctest::Approx(0.0).epsilon(1e-20));
    for (std::size_t k = 0; k < theta.size(); ++k) {
      CHECK(a.critic().params.values[k] == doctest::Approx(theta[k] * (1.0 - c.critic_lr * c.weight_decay)));
    }
  }
}

TEST_CASE("actor objective and update") {
  Rng rng(6);
  DdpgConfig cfg = tiny(3, 4, 6);
  DdpgAgent agent(cfg, rng);
  jitter(agent.mutable_actor(), rng, 0.5);
  jitter(agent.mutable_critic(), rng, 0.5);
  const auto batch = random_batch(cfg, 5, rng);

  SUBCASE("chained gradient vs central differences") {
    const auto g = agent.actor_objective_gradient(batch);
    auto f = [&](const std::vector<double>& p) {
      DdpgAgent copy = agent;
      copy.mutable_actor().params.values = p;
      return copy.actor_objective(batch);
    };
    std::mt19937_64 probe(7);
    const auto gc = fedaa::testing::check_gradient(f, agent.actor().params.values, g, 10000, probe);
    CHECK(gc.max_rel_error < 1e-4);
  }
  SUBCASE("critic blind to actions gives zero actor gradient") {
    const auto& arch = agent.critic().arch();
    const auto s = layer_slice(arch, 0);
    for (std::size_t r = 0; r < s.fan_out; ++r) {
      for (std::size_t c = cfg.state_dim; c < s.fan_in; ++c) {
        agent.mutable_critic().params.values[s.weight_offset + r * s.fan_in + c] = 0.0;
      }
    }
    for (double v : agent.actor_objective_gradient(batch)) CHECK(v == 0.0);
    DdpgConfig no_decay = cfg;
    no_decay.weight_decay = 0.0;
    DdpgAgent a(no_decay, agent.actor(), agent.critic(), agent.target_actor(), agent.target_critic());
    const auto before = a.actor().params;
    a.update_actor(batch);
    CHECK(a.actor().params == before);
  }
  SUBCASE("update touches only the actor") {
    const DdpgAgent before = agent;
    agent.update_actor(batch);
    CHECK(agent.actor().params != before.actor().params);
    CHECK(agent.critic().params == before.critic().params);
    CHECK(agent.target_actor().params == before.target_actor().params);
    CHECK(agent.target_critic().params == before.target_critic().params);
  }
  SUBCASE("Q = a[0] drives action[0] up") {
    // critic 1-hidden: h_0 = relu(a0) (weights on the first action input), Q = h_0
    DdpgConfig c = tiny(2, 3, 4);
    c.weight_decay = 0.0;
    DdpgAgent a(c, rng);
    auto& q = a.mutable_critic().params.values;
    std::fill(q.begin(), q.end(), 0.0);
    const auto arch = a.critic().arch();
    const auto l0 = layer_slice(arch, 0), l1 = layer_slice(arch, 1);
    q[l0.weight_offset + 0 * l0.fan_in + c.state_dim + 0] = 1.0;
    q[l1.weight_offset + 0] = 1.0;
    const std::vector<double> s{0.3, 0.7};
    const std::vector<Transition> b{{s, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 0.0, s}};
    double prev = a.act(s, false, rng)[0];
    for (int i = 0; i < 50; ++i) {
      a.update_actor(b);
      const double now = a.act(s, false, rng)[0];
      CHECK(now > prev);
      prev = now;
    }
  }
}

TEST_CASE("soft update") {
  Rng rng(8);
  DdpgConfig cfg = tiny();
  SUBCASE("epsilon 1 copies mains exactly") {
    cfg.epsilon_soft = 1.0;
    DdpgAgent a(cfg, rng);
    jitter(a.mutable_actor(), rng);
    jitter(a.mutable_critic(), rng);
    a.soft_update();
    CHECK(a.target_actor().params == a.actor().params);
    CHECK(a.target_critic().params == a.critic().params);
  }
  SUBCASE("gap shrinks by 1 - epsilon per call") {
    DdpgAgent a(cfg, rng);
    jitter(a.mutable_actor(), rng);
    const auto gap = [&] {
      double g = 0.0;
      for (std::size_t k = 0; k < a.actor().params.size(); ++k) {
        g = std::max(g, std::abs(a.actor().params.values[k] - a.target_actor().params.values[k]));
      }
      return g;
    };
    double before = gap();
    for (int i = 0; i < 20; ++i) {
      a.soft_update();
      const double now = gap();
      CHECK(now == doctest::Approx(before * (1.0 - cfg.epsilon_soft)).epsilon(1e-9));
      before = now;
    }
  }
}

TEST_CASE("replay buffer") {
  auto t = [](double r) { return Transition{{r}, {1.0}, r, {r}}; };
  SUBCASE("capacity 3, push 4") {
    ReplayBuffer b(3);
    for (int i = 0; i < 4; ++i) b.push(t(i));
    CHECK(b.size() == 3);
    CHECK(b.entries().front().reward == 1.0);
    CHECK(b.entries().back().reward == 3.0);
  }
  SUBCASE("sample all, without replacement, seeded") {
    ReplayBuffer b(10);
    for (int i = 0; i < 10; ++i) b.push(t(i));
    Rng r1(3), r2(3);
    const auto s1 = b.sample(10, r1);
    const auto s2 = b.sample(10, r2);
    CHECK(s1 == s2);
    std::set<double> seen;
    for (const auto& x : s1) seen.insert(x.reward);
    CHECK(seen.size() == 10);
    const auto part = b.sample(4, r1);
    std::set<double> p;
    for (const auto& x : part) p.insert(x.reward);
    CHECK(p.size() == 4);
  }
  SUBCASE("insufficient entries") {
    ReplayBuffer b(5);
    b.push(t(0));
    Rng r(1);
    CHECK_THROWS_AS(b.sample(2, r), ConfigError);
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(9);
  DdpgConfig cfg = tiny(4, 4, 7);
  DdpgAgent a(cfg, rng);
  jitter(a.mutable_actor(), rng);
  jitter(a.mutable_target_critic(), rng);
  a.set_noise_sigma(0.042);
  a.set_update_counter(17);
  const auto path = std::filesystem::temp_directory_path() / "fedaa_test_agent.bin";
  save_checkpoint(a, path);
  const DdpgAgent b = load_checkpoint(path, cfg);
  CHECK(b.actor().params == a.actor().params);
  CHECK(b.critic().params == a.critic().params);
  CHECK(b.target_actor().params == a.target_actor().params);
  CHECK(b.target_critic().params == a.target_critic().params);
  CHECK(b.noise_sigma() == 0.042);
  CHECK(b.update_counter() == 17);

  std::filesystem::resize_file(path, 20);
  CHECK_THROWS(load_checkpoint(path, cfg));
}
