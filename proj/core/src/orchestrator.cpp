#include "fedaa/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>
#include <tuple>

#include "fedaa/errors.hpp"

namespace fedaa {

void ExperimentConfig::validate() const {
  if (num_clients < 2) throw ConfigError("num_clients must be at least 2");
  if (!(malicious_fraction >= 0.0) || !(malicious_fraction < 0.5)) {
    throw ConfigError("malicious_fraction must be in [0, 0.5)");
  }
  if (malicious_fraction > 0.0 && !attack) throw ConfigError("malicious clients need an attack");
  if (!(m_percent > 0.0) || m_percent > 100.0) throw ConfigError("m_percent must be in (0, 100]");
  if (!(participation > 0.0) || participation > 1.0) throw ConfigError("participation must be in (0, 1]");
  if (rounds == 0) throw ConfigError("rounds must be positive");
  if (attack && !(attack->tau >= 0.0)) throw ConfigError("attack tau must be non-negative");
  if (attack && !(attack->ipm_epsilon >= 0.0)) throw ConfigError("attack ipm_epsilon must be non-negative");
  if (!(validation.upload_fraction > 0.0) || validation.upload_fraction > 1.0) {
    throw ConfigError("validation upload_fraction must be in (0, 1]");
  }
  if (validation.mode == ValidationMode::kPerClass) {
    if (validation.pool_per_class == 0) throw ConfigError("validation pool_per_class must be positive");
    for (auto c : validation.per_class_counts) {
      if (c > validation.pool_per_class) throw ConfigError("validation count exceeds pool_per_class");
    }
  }
  if (dataset.kind == DatasetKind::kIdx && (dataset.images_path.empty() || dataset.labels_path.empty())) {
    throw ConfigError("idx dataset needs images and labels paths");
  }
  if (dataset.kind == DatasetKind::kCsv && dataset.csv_path.empty()) throw ConfigError("csv dataset needs a path");
  if (!(dataset.dirichlet_concentration > 0.0)) throw ConfigError("dirichlet_concentration must be positive");
  local.validate();
  DdpgConfig d = ddpg;
  d.state_dim = d.action_dim = 1;
  d.validate();
}

// --- data --------------------------------------------------------------------------

namespace {

// Server pool drawn from the clients' generative models, each client chosen
// with probability proportional to its sample count.
LabeledDataset synthetic_mixture_pool(const SyntheticDraw& draw, std::size_t per_class, Rng& rng) {
  std::vector<double> weights;
  std::size_t next_origin = 0;
  for (const auto& s : draw.samples) {
    weights.push_back(static_cast<double>(s.size()));
    next_origin += s.size();
  }
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  constexpr int k = SyntheticSpec::kNumClasses;
  std::vector<std::size_t> have(k, 0);
  std::vector<LabeledDataset> kept;
  std::size_t missing = per_class * k;
  const std::size_t max_draws = per_class * k * 2000;
  for (std::size_t draws = 0; missing > 0; ++draws) {
    if (draws == max_draws) {
      throw ConfigError("synthetic validation pool: some class is too rare to collect " + std::to_string(per_class) +
                        " samples");
    }
    LabeledDataset one = sample_synthetic(draw.models[pick(rng)], 1, rng);
    const auto c = static_cast<std::size_t>(one.labels[0]);
    if (have[c] == per_class) continue;
    ++have[c];
    --missing;
    one.origin = {next_origin++};
    kept.push_back(std::move(one));
  }
  return concat(kept);
}

}  // namespace

ExperimentData build_experiment_data(const ExperimentConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, SeedStream::kData);
  const bool per_class = cfg.validation.mode == ValidationMode::kPerClass;

  std::vector<LabeledDataset> raw;
  LabeledDataset pool;
  if (cfg.dataset.kind == DatasetKind::kSynthetic) {
    SyntheticSpec spec;
    spec.synthetic_alpha = cfg.dataset.synthetic_alpha;
    spec.synthetic_beta = cfg.dataset.synthetic_beta;
    spec.num_clients = cfg.num_clients;
    spec.size_log_mean = cfg.dataset.size_log_mean;
    spec.size_log_sigma = cfg.dataset.size_log_sigma;
    spec.size_min = cfg.dataset.size_min;
    spec.size_max = cfg.dataset.size_max;
    SyntheticDraw draw = draw_synthetic(spec, rng);
    if (per_class) pool = synthetic_mixture_pool(draw, cfg.validation.pool_per_class, rng);
    if (cfg.dataset.partition == PartitionScheme::kDirichlet) {
      raw = dirichlet_assign(concat(draw.samples), cfg.num_clients, cfg.dataset.dirichlet_concentration, rng);
    } else {
      raw = std::move(draw.samples);
    }
  } else {
    LabeledDataset source = cfg.dataset.kind == DatasetKind::kIdx
                                ? load_idx_images(cfg.dataset.images_path, cfg.dataset.labels_path)
                                : load_csv(cfg.dataset.csv_path);
    if (per_class) std::tie(pool, source) = reserve_per_class(source, cfg.validation.pool_per_class, rng);
    raw = dirichlet_assign(source, cfg.num_clients, cfg.dataset.dirichlet_concentration, rng);
  }

  ExperimentData out;
  if (per_class) {
    std::vector<std::size_t> counts = cfg.validation.per_class_counts;
    if (counts.empty()) counts.assign(static_cast<std::size_t>(pool.num_classes), cfg.validation.pool_per_class);
    out.validation = build_validation_set(pool, counts, rng);
  } else {
    std::size_t n_min = raw.front().size();
    for (const auto& r : raw) n_min = std::min(n_min, r.size());
    const auto upload = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.validation.upload_fraction * static_cast<double>(n_min))));
    if (n_min < upload + 2) throw ConfigError("validation upload leaves a client with fewer than 2 samples");
    std::vector<LabeledDataset> uploaded;
    for (auto& r : raw) {
      std::vector<std::size_t> rows(r.size());
      std::iota(rows.begin(), rows.end(), std::size_t{0});
      std::shuffle(rows.begin(), rows.end(), rng);
      std::vector<std::size_t> up(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(upload));
      std::vector<std::size_t> keep(rows.begin() + static_cast<std::ptrdiff_t>(upload), rows.end());
      std::sort(up.begin(), up.end());
      std::sort(keep.begin(), keep.end());
      uploaded.push_back(r.subset(up));
      r = r.subset(keep);
    }
    out.validation = concat(uploaded);
  }
  out.partition.provenance = cfg.dataset.name;
  for (const auto& r : raw) out.partition.clients.push_back(split_train_test(r, rng));
  return out;
}

ArchSpec client_arch(const ExperimentConfig& cfg, std::size_t input_dim, int num_classes) {
  ArchSpec a{input_dim, cfg.hidden_dims, static_cast<std::size_t>(num_classes), Activation::kRelu,
             OutputHead::kLogits};
  a.validate();
  return a;
}

// --- round primitives ------------------------------------------------------------------

std::vector<int> sample_participants(std::size_t n, double ratio, Rng& rng) {
  if (!(ratio > 0.0) || ratio > 1.0) throw ConfigError("participation ratio must be in (0, 1]");
  const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5 + 1e-9));
  if (k == 0) throw ConfigError("participation ratio selects no clients");
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  if (k >= n) return ids;
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

FlatParams aggregate(std::span<const FlatParams> uploads, std::span<const double> action) {
  if (uploads.empty() || uploads.size() != action.size()) {
    throw ConfigError("aggregate: " + std::to_string(uploads.size()) + " uploads but " +
                      std::to_string(action.size()) + " weights");
  }
  double sum = 0.0;
  for (double a : action) {
    if (!(a >= -1e-6)) throw SimulationError("aggregate: negative weight in action");
    sum += a;
  }
  if (!(std::abs(sum - 1.0) <= 1e-6)) throw SimulationError("aggregate: action is not on the simplex");
  FlatParams out{std::vector<double>(uploads.front().size(), 0.0), uploads.front().arch};
  for (std::size_t i = 0; i < uploads.size(); ++i) {
    if (uploads[i].size() != out.size()) throw ConfigError("aggregate: uploads differ in length");
    const double w = action[i];
    for (std::size_t k = 0; k < out.size(); ++k) out.values[k] += w * uploads[i].values[k];
  }
  return out;
}

RewardEval evaluate_reward(const FlatParams& global, const LabeledDataset& validation) {
  if (validation.size() == 0) throw ConfigError("evaluate_reward: empty validation set");
  const std::vector<int> pred = predict(MlpModel::from_params(global), validation.features);
  const auto k = static_cast<std::size_t>(validation.num_classes);
  std::vector<std::size_t> total(k, 0), hit(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto y = static_cast<std::size_t>(validation.labels[i]);
    ++total[y];
    if (pred[i] == validation.labels[i]) {
      ++hit[y];
      ++correct;
    }
  }
  RewardEval r;
  r.reward = static_cast<double>(correct) / static_cast<double>(pred.size());
  r.per_class_acc.resize(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    if (total[c] > 0) r.per_class_acc[c] = static_cast<double>(hit[c]) / static_cast<double>(total[c]);
  }
  return r;
}

FairnessStats fairness_stats(std::span<const double> accuracies, std::span<const double> losses) {
  FairnessStats s;
  if (accuracies.empty()) return s;
  auto moments = [](std::span<const double> v, double& mean, double& var) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
  };
  moments(accuracies, s.mean_acc, s.acc_var);
  s.acc_std = std::sqrt(s.acc_var);
  double loss_var = 0.0;
  if (!losses.empty()) moments(losses, s.mean_loss, loss_var);
  s.loss_std = std::sqrt(loss_var);
  return s;
}

namespace {

void eval_model(const MlpModel& model, const LabeledDataset& test, double& acc, double& loss) {
  const std::vector<int> pred = predict(model, test.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i];
  acc = static_cast<double>(correct) / static_cast<double>(pred.size());
  loss = cross_entropy(model, test.features, test.labels);
}

}  // namespace

FairnessStats evaluate_fairness(std::span<const ClientRecord> clients, std::span<const int> ids) {
  std::vector<double> accs, losses;
  for (int id : ids) {
    const ClientRecord& c = clients[static_cast<std::size_t>(id)];
    if (c.is_malicious()) continue;
    double a = 0.0, l = 0.0;
    eval_model(c.local_model, c.data.test, a, l);
    accs.push_back(a);
    losses.push_back(l);
  }
  return fairness_stats(accs, losses);
}

FairnessStats evaluate_global_on_clients(std::span<const ClientRecord> clients, const FlatParams& global) {
  const MlpModel model = MlpModel::from_params(global);
  std::vector<double> accs, losses;
  for (const auto& c : clients) {
    if (c.is_malicious()) continue;
    double a = 0.0, l = 0.0;
    eval_model(model, c.data.test, a, l);
    accs.push_back(a);
    losses.push_back(l);
  }
  return fairness_stats(accs, losses);
}

std::size_t threads_from_env() {
  if (const char* v = std::getenv("FEDAA_THREADS")) {
    const long n = std::strtol(v, nullptr, 10);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  return 1;
}

// --- round loop ----------------------------------------------------------------------

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// (lowest index) is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t i = worker; i < n; i += stride) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t t = std::max<std::size_t>(1, std::min(threads, n));
  if (t == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < t; ++w) pool.emplace_back(work, w, t);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

class Simulation {
 public:
  Simulation(const ExperimentConfig& cfg, const RunHooks& hooks)
      : cfg_(cfg), hooks_(hooks), threads_(hooks.threads ? hooks.threads : threads_from_env()) {
    cfg_.validate();
    ExperimentData data = build_experiment_data(cfg_);
    validation_ = std::move(data.validation);
    const auto& first = data.partition.clients.front().train;
    arch_ = client_arch(cfg_, first.dim(), first.num_classes);

    Rng init_rng = make_rng(cfg_.seed, SeedStream::kModelInit);
    global_ = MlpModel::glorot(arch_, init_rng).params;

    Rng role_rng = make_rng(cfg_.seed, SeedStream::kRoles);
    const std::vector<int> bad = draw_malicious_ids(cfg_.num_clients, cfg_.malicious_fraction, role_rng);
    for (std::size_t k = 0; k < cfg_.num_clients; ++k) {
      ClientRecord c;
      c.id = static_cast<int>(k);
      c.data = std::move(data.partition.clients[k]);
      c.local_model = MlpModel{global_};
      if (std::binary_search(bad.begin(), bad.end(), c.id)) {
        c.role = ClientRole::kMalicious;
        c.attack = cfg_.attack;
      }
      clients_.push_back(std::move(c));
    }
    participation_rng_ = make_rng(cfg_.seed, SeedStream::kParticipation);
  }

  std::vector<RoundRecord> run(bool adaptive) {
    std::vector<int> participants = sample_participants(cfg_.num_clients, cfg_.participation, participation_rng_);
    // Before any local work every participant holds the broadcast model.
    std::vector<Upload> uploads;
    for (int id : participants) uploads.emplace_back(id, global_);

    std::optional<DdpgAgent> agent;
    std::optional<ReplayBuffer> buffer;
    Rng explore_rng = make_rng(cfg_.seed, SeedStream::kExploration);
    Rng replay_rng = make_rng(cfg_.seed, SeedStream::kReplay);
    SelectionResult selection;
    if (adaptive) {
      selection = select_clients(uploads, cfg_.m_percent, cfg_.distance_scope);
      DdpgConfig dc = cfg_.ddpg;
      dc.state_dim = dc.action_dim = selection_count(cfg_.m_percent, participants.size());
      Rng agent_rng = make_rng(cfg_.seed, SeedStream::kAgent);
      agent.emplace(dc, agent_rng);
      buffer.emplace(dc.replay_capacity);
    }

    std::vector<RoundRecord> records;
    for (std::size_t t = 0; t < cfg_.rounds; ++t) {
      try {
        RoundRecord rec;
        rec.round = t;
        std::vector<double> state;
        if (adaptive) {
          state = selection.state;
          if (state.size() != agent->config().state_dim) {
            throw SimulationError("selection returned " + std::to_string(state.size()) + " clients, agent expects " +
                                  std::to_string(agent->config().state_dim));
          }
          agent->set_noise_sigma(noise_at(t));
          rec.action = agent->act(state, /*explore=*/true, explore_rng);
          rec.selected_ids = selection.selected_ids;
        } else {
          rec.selected_ids = participants;
          rec.action = fedavg_weights(participants);
        }

        std::vector<FlatParams> chosen;
        for (int id : rec.selected_ids) chosen.push_back(upload_of(uploads, id));
        global_ = aggregate(chosen, rec.action);

        const RewardEval rw = evaluate_reward(global_, validation_);
        rec.reward = rw.reward;
        rec.per_class_val_acc = rw.per_class_acc;

        const FairnessStats global_stats = evaluate_global_on_clients(clients_, global_);
        rec.global_mean_acc = global_stats.mean_acc;
        rec.global_acc_std = global_stats.acc_std;

        participants = sample_participants(cfg_.num_clients, cfg_.participation, participation_rng_);
        uploads = local_round(participants, t);

        const FairnessStats fs = evaluate_fairness(clients_, participants);
        rec.mean_benign_acc = fs.mean_acc;
        rec.acc_std = fs.acc_std;
        rec.acc_var = fs.acc_var;
        rec.loss_std = fs.loss_std;

        if (adaptive) {
          selection = select_clients(uploads, cfg_.m_percent, cfg_.distance_scope);
          buffer->push(Transition{state, rec.action, rec.reward, selection.state});
          const DdpgConfig& dc = agent->config();
          if (buffer->size() >= dc.warmup) {
            const auto batch = buffer->sample(std::min(dc.batch_size, buffer->size()), replay_rng);
            agent->update_critic(batch);
            agent->update_actor(batch);
          }
          if (t % dc.target_update_every == 0) agent->soft_update();
        }

        if (hooks_.on_round) hooks_.on_round(rec);
        records.push_back(std::move(rec));
      } catch (const Error& e) {
        throw SimulationError("round " + std::to_string(t) + ": " + e.what());
      }
    }
    if (agent && hooks_.on_finish) hooks_.on_finish(*agent);
    return records;
  }

 private:
  double noise_at(std::size_t t) const {
    const double s0 = cfg_.ddpg.noise_sigma, s1 = cfg_.ddpg.noise_sigma_final;
    if (cfg_.rounds <= 1) return s0;
    return s0 + (s1 - s0) * static_cast<double>(t) / static_cast<double>(cfg_.rounds - 1);
  }

  std::vector<double> fedavg_weights(std::span<const int> ids) const {
    std::vector<double> w;
    double total = 0.0;
    for (int id : ids) {
      w.push_back(static_cast<double>(clients_[static_cast<std::size_t>(id)].data.train.size()));
      total += w.back();
    }
    for (double& x : w) x /= total;
    return w;
  }

  static const FlatParams& upload_of(const std::vector<Upload>& uploads, int id) {
    for (const auto& u : uploads) {
      if (u.first == id) return u.second;
    }
    throw SimulationError("no upload from client " + std::to_string(id));
  }

  // Benign participants train first; attackers (IPM needs the benign uploads) follow.
  std::vector<Upload> local_round(const std::vector<int>& participants, std::size_t round) {
    std::vector<int> benign, malicious;
    for (int id : participants) (clients_[static_cast<std::size_t>(id)].is_malicious() ? malicious : benign).push_back(id);

    std::vector<FlatParams> benign_uploads(benign.size());
    parallel_for(benign.size(), threads_, [&](std::size_t i) {
      ClientRecord& c = clients_[static_cast<std::size_t>(benign[i])];
      Rng rng = make_rng(cfg_.seed, SeedStream::kClients, static_cast<std::uint64_t>(c.id), round);
      benign_uploads[i] = local_update(c, global_, cfg_.local, rng);
    });
    std::vector<FlatParams> malicious_uploads(malicious.size());
    parallel_for(malicious.size(), threads_, [&](std::size_t i) {
      ClientRecord& c = clients_[static_cast<std::size_t>(malicious[i])];
      Rng rng = make_rng(cfg_.seed, SeedStream::kClients, static_cast<std::uint64_t>(c.id), round);
      malicious_uploads[i] = local_update(c, global_, cfg_.local, rng, benign_uploads);
    });

    std::vector<Upload> out;
    std::size_t b = 0, m = 0;
    for (int id : participants) {
      if (clients_[static_cast<std::size_t>(id)].is_malicious()) {
        out.emplace_back(id, std::move(malicious_uploads[m++]));
      } else {
        out.emplace_back(id, std::move(benign_uploads[b++]));
      }
    }
    return out;
  }

  ExperimentConfig cfg_;
  RunHooks hooks_;
  std::size_t threads_;
  LabeledDataset validation_;
  ArchSpec arch_;
  FlatParams global_;
  std::vector<ClientRecord> clients_;
  Rng participation_rng_;
};

}  // namespace

std::vector<RoundRecord> run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks) {
  return Simulation(cfg, hooks).run(/*adaptive=*/true);
}

std::vector<RoundRecord> run_fedavg_baseline(const ExperimentConfig& cfg, const RunHooks& hooks) {
  return Simulation(cfg, hooks).run(/*adaptive=*/false);
}

std::vector<RoundRecord> run(const ExperimentConfig& cfg, const RunHooks& hooks) {
  return cfg.aggregator == Aggregator::kFedAA ? run_experiment(cfg, hooks) : run_fedavg_baseline(cfg, hooks);
}

}  // namespace fedaa
