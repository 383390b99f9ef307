#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedaa/clients.hpp"
#include "fedaa/datasets.hpp"
#include "fedaa/ddpg.hpp"
#include "fedaa/selection.hpp"

namespace fedaa {

enum class DatasetKind { kSynthetic, kIdx, kCsv };
enum class PartitionScheme { kNatural, kDirichlet };
enum class ValidationMode {
  kUpload,    ///< every client hands round(upload_fraction * min n_k) samples to the server
  kPerClass,  ///< explicit per-class counts drawn from a reserved pool
};
enum class Aggregator { kFedAA, kFedAvg };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kSynthetic;
  std::string name = "synthetic00";
  double synthetic_alpha = 0.0;
  double synthetic_beta = 0.0;
  double size_log_mean = 4.0;
  double size_log_sigma = 2.0;
  std::size_t size_min = 20;
  std::size_t size_max = 1000;
  /// kNatural keeps each synthetic client's own draw; kDirichlet pools all
  /// samples and re-partitions them by label skew. File datasets are always
  /// Dirichlet-partitioned.
  PartitionScheme partition = PartitionScheme::kNatural;
  double dirichlet_concentration = 0.1;
  std::string images_path;
  std::string labels_path;
  std::string csv_path;

  bool operator==(const DatasetSpec&) const = default;
};

struct ValidationSpec {
  ValidationMode mode = ValidationMode::kUpload;
  double upload_fraction = 0.1;
  std::size_t pool_per_class = 100;
  /// Empty means pool_per_class for every class.
  std::vector<std::size_t> per_class_counts;

  bool operator==(const ValidationSpec&) const = default;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<std::size_t> hidden_dims;  // client model; empty = logistic regression
  std::size_t num_clients = 100;
  double malicious_fraction = 0.0;
  std::optional<AttackSpec> attack;
  double m_percent = 30.0;
  double participation = 1.0;
  std::size_t rounds = 50;
  SgdConfig local;
  DdpgConfig ddpg;  // state_dim/action_dim are derived from the selection size
  DistanceScope distance_scope = DistanceScope::kAllLayers;
  ValidationSpec validation;
  Aggregator aggregator = Aggregator::kFedAA;
  std::uint64_t seed = 1;

  /// Throws ConfigError on constraint violations.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

struct RoundRecord {
  std::size_t round = 0;
  double reward = 0.0;
  double mean_benign_acc = 0.0;  // locally trained models on their own test split
  double acc_std = 0.0;          // population std
  double acc_var = 0.0;
  double loss_std = 0.0;
  double global_mean_acc = 0.0;  // the round's global model on each benign test split
  double global_acc_std = 0.0;
  std::vector<int> selected_ids;
  std::vector<double> action;
  std::vector<double> per_class_val_acc;

  bool operator==(const RoundRecord&) const = default;
};

struct ExperimentData {
  ClientPartition partition;
  LabeledDataset validation;
};

/// Data for a config: client partition plus the server validation set,
/// disjoint from every client sample.
ExperimentData build_experiment_data(const ExperimentConfig& cfg);

/// Client model architecture implied by the config and data.
ArchSpec client_arch(const ExperimentConfig& cfg, std::size_t input_dim, int num_classes);

/// round-half-up(ratio * n) distinct ids, ascending. ratio in (0, 1].
std::vector<int> sample_participants(std::size_t n, double ratio, Rng& rng);

/// Convex combination sum_i action[i] * uploads[i]. Throws SimulationError
/// if the action leaves the simplex by more than 1e-6.
FlatParams aggregate(std::span<const FlatParams> uploads, std::span<const double> action);

struct RewardEval {
  double reward = 0.0;
  std::vector<double> per_class_acc;  // 0 for classes absent from the set
};

RewardEval evaluate_reward(const FlatParams& global, const LabeledDataset& validation);

struct FairnessStats {
  double mean_acc = 0.0;
  double acc_std = 0.0;
  double acc_var = 0.0;
  double mean_loss = 0.0;
  double loss_std = 0.0;
};

/// Population statistics of per-client test accuracy and loss.
FairnessStats fairness_stats(std::span<const double> accuracies, std::span<const double> losses);

/// Evaluates each benign client in `ids` with its stored local model on its
/// own test split. Malicious clients are skipped.
FairnessStats evaluate_fairness(std::span<const ClientRecord> clients, std::span<const int> ids);

/// Evaluates `global` on the test split of every benign client.
FairnessStats evaluate_global_on_clients(std::span<const ClientRecord> clients, const FlatParams& global);

struct RunHooks {
  std::function<void(const RoundRecord&)> on_round;
  std::function<void(const DdpgAgent&)> on_finish;  // FedAA only
  /// Worker threads for local training; 0 reads FEDAA_THREADS (default 1).
  std::size_t threads = 0;
};

/// Adaptive aggregation: distance-based selection plus DDPG-chosen weights.
std::vector<RoundRecord> run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks = {});

/// FedAvg: same loop, weights proportional to client training-set size.
std::vector<RoundRecord> run_fedavg_baseline(const ExperimentConfig& cfg, const RunHooks& hooks = {});

/// Dispatches on cfg.aggregator.
std::vector<RoundRecord> run(const ExperimentConfig& cfg, const RunHooks& hooks = {});

/// Effective worker count from FEDAA_THREADS (>= 1).
std::size_t threads_from_env();

}  // namespace fedaa
