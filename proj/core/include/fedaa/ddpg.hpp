#pragma once

// Deep deterministic policy gradient agent whose actions are aggregation
// weights on the probability simplex.
//
//   actor   pi(s)   : state_dim -> hidden -> action_dim, softmax head
//   critic  Q(s, a) : [s || a]  -> hidden -> 1
//
// The critic regresses onto y = r + gamma * Q'(s', pi'(s')) computed with the
// target networks; the actor ascends mean Q(s, pi(s)) through the frozen
// critic; targets track the mains by theta' <- eps * theta + (1 - eps) * theta'.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <vector>

#include "fedaa/nn.hpp"
#include "fedaa/rng.hpp"

namespace fedaa {

struct DdpgConfig {
  std::size_t state_dim = 1;
  std::size_t action_dim = 1;
  std::size_t hidden = 256;  // one hidden layer in actor and critic
  double gamma = 0.99;
  double epsilon_soft = 0.001;
  double actor_lr = 1e-2;
  double critic_lr = 1e-2;
  double weight_decay = 1e-5;
  double noise_sigma = 0.1;        // initial logit-noise std
  double noise_sigma_final = 0.01; // reached at the last round
  std::size_t replay_capacity = 10000;
  std::size_t batch_size = 64;
  std::size_t warmup = 10;
  std::size_t target_update_every = 2;

  void validate() const;
  bool operator==(const DdpgConfig&) const = default;
};

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;

  bool operator==(const Transition&) const = default;
};

/// Bounded FIFO of transitions; the oldest entry is evicted first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  /// n distinct entries, uniform without replacement. Throws ConfigError if
  /// fewer than n are stored.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Transition>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<Transition> entries_;
};

class DdpgAgent {
 public:
  /// Builds Glorot-initialised mains; targets start as exact copies.
  DdpgAgent(const DdpgConfig& cfg, Rng& rng);
  /// Assembles an agent from explicit networks (tests, checkpoints).
  DdpgAgent(const DdpgConfig& cfg, MlpModel actor, MlpModel critic, MlpModel target_actor, MlpModel target_critic);

  /// pi(s), optionally with N(0, noise_sigma^2) added to the pre-softmax
  /// logits. The result always lies on the simplex.
  std::vector<double> act(std::span<const double> state, bool explore, Rng& rng) const;

  /// y_i = r_i + gamma * Q'(s'_i, pi'(s'_i)).
  std::vector<double> critic_target(std::span<const Transition> batch) const;

  /// One SGD step on the critic for mean squared TD error. Returns the loss
  /// before the step.
  double update_critic(std::span<const Transition> batch);

  /// One ascent step on mean Q(s, pi(s)) through the frozen critic. Returns
  /// the objective before the step.
  double update_actor(std::span<const Transition> batch);

  /// theta' <- eps * theta + (1 - eps) * theta' for both target networks.
  void soft_update();

  // Gradients used by the update rules (exposed for finite-difference checks).
  std::vector<double> critic_loss_gradient(std::span<const Transition> batch, double* loss = nullptr) const;
  std::vector<double> actor_objective_gradient(std::span<const Transition> batch, double* objective = nullptr) const;
  double critic_loss(std::span<const Transition> batch) const;
  double actor_objective(std::span<const Transition> batch) const;

  double q_value(std::span<const double> state, std::span<const double> action) const;

  const DdpgConfig& config() const { return cfg_; }
  const MlpModel& actor() const { return actor_; }
  const MlpModel& critic() const { return critic_; }
  const MlpModel& target_actor() const { return target_actor_; }
  const MlpModel& target_critic() const { return target_critic_; }
  MlpModel& mutable_actor() { return actor_; }
  MlpModel& mutable_critic() { return critic_; }
  MlpModel& mutable_target_actor() { return target_actor_; }
  MlpModel& mutable_target_critic() { return target_critic_; }

  double noise_sigma() const { return noise_sigma_; }
  void set_noise_sigma(double sigma) { noise_sigma_ = sigma; }
  std::uint64_t update_counter() const { return update_counter_; }
  void set_update_counter(std::uint64_t c) { update_counter_ = c; }

  static ArchSpec actor_arch(const DdpgConfig& cfg);
  static ArchSpec critic_arch(const DdpgConfig& cfg);

 private:
  Matrix critic_input(std::span<const Transition> batch, const Matrix& actions) const;
  Matrix states(std::span<const Transition> batch) const;

  DdpgConfig cfg_;
  MlpModel actor_, critic_, target_actor_, target_critic_;
  double noise_sigma_;
  std::uint64_t update_counter_ = 0;
};

/// Binary checkpoint (little-endian):
///   "FEDAADPG" | u32 version=1 | f64 gamma, epsilon_soft, actor_lr,
///   critic_lr, weight_decay, noise_sigma | u64 update_counter |
///   4 x network (actor, critic, target_actor, target_critic), each:
///     u64 input_dim | u64 n_hidden | u64 hidden[n_hidden] | u64 output_dim |
///     u32 head | u64 n_params | f64 params[n_params]
void save_checkpoint(const DdpgAgent& agent, const std::filesystem::path& path);
DdpgAgent load_checkpoint(const std::filesystem::path& path, const DdpgConfig& base);

}  // namespace fedaa
