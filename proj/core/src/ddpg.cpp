#include "fedaa/ddpg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "fedaa/errors.hpp"

namespace fedaa {

void DdpgConfig::validate() const {
  if (state_dim == 0 || action_dim == 0) throw ConfigError("ddpg: state and action dims must be positive");
  if (hidden == 0) throw ConfigError("ddpg: hidden width must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ddpg: gamma must be in [0, 1]");
  if (!(epsilon_soft > 0.0 && epsilon_soft <= 1.0)) throw ConfigError("ddpg: epsilon_soft must be in (0, 1]");
  if (!(actor_lr >= 0.0) || !(critic_lr >= 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("ddpg: learning rates and weight decay must be non-negative");
  }
  if (!(noise_sigma >= 0.0) || !(noise_sigma_final >= 0.0)) throw ConfigError("ddpg: noise must be non-negative");
  if (replay_capacity == 0 || batch_size == 0) throw ConfigError("ddpg: replay capacity and batch size must be positive");
  if (target_update_every == 0) throw ConfigError("ddpg: target_update_every must be positive");
}

// --- replay buffer -------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(t));
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (n > entries_.size()) {
    throw ConfigError("replay buffer holds " + std::to_string(entries_.size()) + " entries, " + std::to_string(n) +
                      " requested");
  }
  std::vector<std::size_t> idx(entries_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n slots become a uniform sample.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(entries_[idx[i]]);
  return out;
}

// --- agent -----------------------------------------------------------------------

ArchSpec DdpgAgent::actor_arch(const DdpgConfig& cfg) {
  return ArchSpec{cfg.state_dim, {cfg.hidden}, cfg.action_dim, Activation::kRelu, OutputHead::kSoftmaxSimplex};
}

ArchSpec DdpgAgent::critic_arch(const DdpgConfig& cfg) {
  return ArchSpec{cfg.state_dim + cfg.action_dim, {cfg.hidden}, 1, Activation::kRelu, OutputHead::kScalar};
}

DdpgAgent::DdpgAgent(const DdpgConfig& cfg, Rng& rng)
    : DdpgAgent(cfg, MlpModel::zeros(actor_arch(cfg)), MlpModel::zeros(critic_arch(cfg)),
                MlpModel::zeros(actor_arch(cfg)), MlpModel::zeros(critic_arch(cfg))) {
  actor_ = MlpModel::glorot(actor_arch(cfg), rng);
  critic_ = MlpModel::glorot(critic_arch(cfg), rng);
  target_actor_ = actor_;
  target_critic_ = critic_;
}

DdpgAgent::DdpgAgent(const DdpgConfig& cfg, MlpModel actor, MlpModel critic, MlpModel target_actor,
                     MlpModel target_critic)
    : cfg_(cfg),
      actor_(std::move(actor)),
      critic_(std::move(critic)),
      target_actor_(std::move(target_actor)),
      target_critic_(std::move(target_critic)),
      noise_sigma_(cfg.noise_sigma) {
  cfg_.validate();
  const ArchSpec a = actor_arch(cfg_), c = critic_arch(cfg_);
  if (!(actor_.arch() == a) || !(target_actor_.arch() == a)) throw ConfigError("ddpg: actor architecture mismatch");
  if (!(critic_.arch() == c) || !(target_critic_.arch() == c)) throw ConfigError("ddpg: critic architecture mismatch");
}

std::vector<double> DdpgAgent::act(std::span<const double> state, bool explore, Rng& rng) const {
  if (state.size() != cfg_.state_dim) {
    throw ConfigError("ddpg: state has length " + std::to_string(state.size()) + ", actor expects " +
                      std::to_string(cfg_.state_dim));
  }
  Matrix s(1, state.size());
  std::copy(state.begin(), state.end(), s.data.begin());
  const ForwardTrace t = forward_trace(actor_, s);
  std::vector<double> logits = t.pre.back().data;
  if (explore && noise_sigma_ > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma_);
    for (double& z : logits) z += noise(rng);
  }
  softmax_inplace(logits);
  return logits;
}

Matrix DdpgAgent::states(std::span<const Transition> batch) const {
  Matrix s(batch.size(), cfg_.state_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].state.size() != cfg_.state_dim) throw ConfigError("ddpg: transition state length mismatch");
    std::copy(batch[i].state.begin(), batch[i].state.end(), s.row(i).begin());
  }
  return s;
}

Matrix DdpgAgent::critic_input(std::span<const Transition> batch, const Matrix& actions) const {
  Matrix x(batch.size(), cfg_.state_dim + cfg_.action_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = x.row(i);
    std::copy(batch[i].state.begin(), batch[i].state.end(), row.begin());
    auto a = actions.row(i);
    std::copy(a.begin(), a.end(), row.begin() + static_cast<std::ptrdiff_t>(cfg_.state_dim));
  }
  return x;
}

double DdpgAgent::q_value(std::span<const double> state, std::span<const double> action) const {
  Matrix x(1, cfg_.state_dim + cfg_.action_dim);
  std::copy(state.begin(), state.end(), x.data.begin());
  std::copy(action.begin(), action.end(), x.data.begin() + static_cast<std::ptrdiff_t>(cfg_.state_dim));
  return forward(critic_, x)(0, 0);
}

std::vector<double> DdpgAgent::critic_target(std::span<const Transition> batch) const {
  if (batch.empty()) throw ConfigError("ddpg: empty batch");
  Matrix next(batch.size(), cfg_.state_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].next_state.size() != cfg_.state_dim) throw ConfigError("ddpg: next_state length mismatch");
    std::copy(batch[i].next_state.begin(), batch[i].next_state.end(), next.row(i).begin());
  }
  const Matrix next_actions = forward(target_actor_, next);
  Matrix x(batch.size(), cfg_.state_dim + cfg_.action_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = x.row(i);
    std::copy(batch[i].next_state.begin(), batch[i].next_state.end(), row.begin());
    auto a = next_actions.row(i);
    std::copy(a.begin(), a.end(), row.begin() + static_cast<std::ptrdiff_t>(cfg_.state_dim));
  }
  const Matrix q_next = forward(target_critic_, x);
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) y[i] = batch[i].reward + cfg_.gamma * q_next(i, 0);
  return y;
}

std::vector<double> DdpgAgent::critic_loss_gradient(std::span<const Transition> batch, double* loss) const {
  const std::vector<double> y = critic_target(batch);
  Matrix actions(batch.size(), cfg_.action_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].action.size() != cfg_.action_dim) throw ConfigError("ddpg: transition action length mismatch");
    std::copy(batch[i].action.begin(), batch[i].action.end(), actions.row(i).begin());
  }
  (void)states(batch);  // shape check
  const ForwardTrace t = forward_trace(critic_, critic_input(batch, actions));
  const double n = static_cast<double>(batch.size());
  Matrix dq(batch.size(), 1);
  double l = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double resid = y[i] - t.output(i, 0);
    l += resid * resid;
    dq(i, 0) = -2.0 * resid / n;
  }
  l /= n;
  if (!std::isfinite(l)) throw NumericError("ddpg: non-finite critic loss");
  if (loss) *loss = l;
  return backward(critic_, t, dq).param_grad;
}

double DdpgAgent::critic_loss(std::span<const Transition> batch) const {
  double l = 0.0;
  (void)critic_loss_gradient(batch, &l);
  return l;
}

std::vector<double> DdpgAgent::actor_objective_gradient(std::span<const Transition> batch, double* objective) const {
  if (batch.empty()) throw ConfigError("ddpg: empty batch");
  const ForwardTrace at = forward_trace(actor_, states(batch));
  const ForwardTrace ct = forward_trace(critic_, critic_input(batch, at.output));
  const double n = static_cast<double>(batch.size());
  double j = 0.0;
  Matrix dq(batch.size(), 1, 1.0 / n);
  for (std::size_t i = 0; i < batch.size(); ++i) j += ct.output(i, 0);
  j /= n;
  if (objective) *objective = j;

  // dJ/da is the action block of the critic's input gradient.
  const Matrix dx = backward(critic_, ct, dq).input_grad;
  Matrix da(batch.size(), cfg_.action_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t k = 0; k < cfg_.action_dim; ++k) da(i, k) = dx(i, cfg_.state_dim + k);
  }
  std::vector<double> g = backward(actor_, at, da).param_grad;
  for (double v : g) {
    if (!std::isfinite(v)) throw NumericError("ddpg: non-finite actor gradient");
  }
  return g;
}

double DdpgAgent::actor_objective(std::span<const Transition> batch) const {
  double j = 0.0;
  (void)actor_objective_gradient(batch, &j);
  return j;
}

double DdpgAgent::update_critic(std::span<const Transition> batch) {
  double loss = 0.0;
  const std::vector<double> g = critic_loss_gradient(batch, &loss);
  auto& theta = critic_.params.values;
  for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= cfg_.critic_lr * (g[k] + cfg_.weight_decay * theta[k]);
  return loss;
}

double DdpgAgent::update_actor(std::span<const Transition> batch) {
  double j = 0.0;
  const std::vector<double> g = actor_objective_gradient(batch, &j);
  auto& theta = actor_.params.values;
  for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += cfg_.actor_lr * (g[k] - cfg_.weight_decay * theta[k]);
  ++update_counter_;
  return j;
}

void DdpgAgent::soft_update() {
  const double eps = cfg_.epsilon_soft;
  auto blend = [eps](const MlpModel& main, MlpModel& target) {
    auto& t = target.params.values;
    const auto& m = main.params.values;
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = eps * m[k] + (1.0 - eps) * t[k];
  };
  blend(actor_, target_actor_);
  blend(critic_, target_critic_);
}

// --- checkpoint ------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'F', 'E', 'D', 'A', 'A', 'D', 'P', 'G'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  const auto offset = static_cast<std::size_t>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IngestionError("truncated checkpoint", offset);
  return v;
}

void put_net(std::ofstream& out, const MlpModel& m) {
  const ArchSpec& a = m.arch();
  put<std::uint64_t>(out, a.input_dim);
  put<std::uint64_t>(out, a.hidden_dims.size());
  for (auto h : a.hidden_dims) put<std::uint64_t>(out, h);
  put<std::uint64_t>(out, a.output_dim);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(a.output_head));
  put<std::uint64_t>(out, m.params.values.size());
  out.write(reinterpret_cast<const char*>(m.params.values.data()),
            static_cast<std::streamsize>(m.params.values.size() * sizeof(double)));
}

MlpModel get_net(std::ifstream& in) {
  ArchSpec a;
  a.input_dim = get<std::uint64_t>(in);
  const auto n_hidden = get<std::uint64_t>(in);
  if (n_hidden > 16) throw IngestionError("implausible hidden layer count", static_cast<std::size_t>(in.tellg()));
  for (std::uint64_t i = 0; i < n_hidden; ++i) a.hidden_dims.push_back(get<std::uint64_t>(in));
  a.output_dim = get<std::uint64_t>(in);
  const auto head = get<std::uint32_t>(in);
  if (head > 2) throw IngestionError("unknown output head", static_cast<std::size_t>(in.tellg()));
  a.output_head = static_cast<OutputHead>(head);
  const auto n = get<std::uint64_t>(in);
  if (n != param_count(a)) throw IngestionError("parameter count disagrees with header", static_cast<std::size_t>(in.tellg()));
  FlatParams p{std::vector<double>(n), a};
  for (auto& v : p.values) v = get<double>(in);
  return MlpModel::from_params(std::move(p));
}

}  // namespace

void save_checkpoint(const DdpgAgent& agent, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const DdpgConfig& c = agent.config();
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  for (double v : {c.gamma, c.epsilon_soft, c.actor_lr, c.critic_lr, c.weight_decay, agent.noise_sigma()}) put(out, v);
  put<std::uint64_t>(out, agent.update_counter());
  put_net(out, agent.actor());
  put_net(out, agent.critic());
  put_net(out, agent.target_actor());
  put_net(out, agent.target_critic());
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

DdpgAgent load_checkpoint(const std::filesystem::path& path, const DdpgConfig& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw IngestionError("bad checkpoint magic", 0);
  }
  if (get<std::uint32_t>(in) != kVersion) throw IngestionError("unsupported checkpoint version", 8);
  DdpgConfig cfg = base;
  cfg.gamma = get<double>(in);
  cfg.epsilon_soft = get<double>(in);
  cfg.actor_lr = get<double>(in);
  cfg.critic_lr = get<double>(in);
  cfg.weight_decay = get<double>(in);
  const double sigma = get<double>(in);
  const auto counter = get<std::uint64_t>(in);
  MlpModel actor = get_net(in);
  MlpModel critic = get_net(in);
  MlpModel target_actor = get_net(in);
  MlpModel target_critic = get_net(in);
  if (actor.arch().hidden_dims.size() != 1) throw IngestionError("actor must have one hidden layer", 0);
  cfg.state_dim = actor.arch().input_dim;
  cfg.action_dim = actor.arch().output_dim;
  cfg.hidden = actor.arch().hidden_dims.front();
  DdpgAgent agent(cfg, std::move(actor), std::move(critic), std::move(target_actor), std::move(target_critic));
  agent.set_noise_sigma(sigma);
  agent.set_update_counter(counter);
  return agent;
}

}  // namespace fedaa
