#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedaa/nn.hpp"
#include "fedaa/rng.hpp"

namespace fedaa {

struct LabeledDataset {
  Matrix features;  // n x d
  std::vector<int> labels;
  int num_classes = 0;
  /// Row index of each sample in the dataset it was carved from. Lets tests
  /// check partition completeness and validation-set disjointness.
  std::vector<std::size_t> origin;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols; }

  /// Throws ConfigError if labels are out of range, shapes disagree, the set
  /// is empty or any feature is non-finite.
  void validate() const;

  /// Rows `rows` of this dataset; origin is carried over.
  LabeledDataset subset(std::span<const std::size_t> rows) const;

  std::vector<std::size_t> class_counts() const;

  bool operator==(const LabeledDataset&) const = default;
};

/// Concatenate datasets with equal width and class count. Origins are kept.
LabeledDataset concat(std::span<const LabeledDataset> parts);

struct ClientData {
  LabeledDataset train;
  LabeledDataset test;

  bool operator==(const ClientData&) const = default;
};

struct ClientPartition {
  std::vector<ClientData> clients;
  std::string provenance;

  bool operator==(const ClientPartition&) const = default;
};

/// SYNTHETIC(alpha, beta) generator settings.
struct SyntheticSpec {
  double synthetic_alpha = 0.0;  // model discrepancy
  double synthetic_beta = 0.0;   // data discrepancy
  std::size_t num_clients = 100;
  /// Explicit per-client sizes. When empty, sizes are drawn from
  /// LogNormal(size_log_mean, size_log_sigma) and clamped to [size_min, size_max].
  std::vector<std::size_t> samples_per_client;
  double size_log_mean = 4.0;
  double size_log_sigma = 2.0;
  std::size_t size_min = 20;
  std::size_t size_max = 1000;

  static constexpr std::size_t kInputDim = 60;
  static constexpr int kNumClasses = 10;

  bool operator==(const SyntheticSpec&) const = default;
};

/// Per-client generative model drawn by the synthetic generator.
struct SyntheticClientModel {
  Matrix weight;              // 10 x 60
  std::vector<double> bias;   // 10
  std::vector<double> mean;   // v_k, length 60
  double u = 0.0;             // model shift
  double mu = 0.0;            // data shift
};

/// Draws one client's generative model.
SyntheticClientModel draw_synthetic_model(const SyntheticSpec& spec, Rng& rng);

/// Draws `n` samples from a client generative model. Feature j (1-based) has
/// variance j^-1.2 around mean[j-1]; label = argmax softmax(W x + b).
LabeledDataset sample_synthetic(const SyntheticClientModel& model, std::size_t n, Rng& rng);

/// Output of the full generator: raw per-client samples plus the models that
/// produced them (needed to draw a server pool from the same mixture).
struct SyntheticDraw {
  std::vector<SyntheticClientModel> models;
  std::vector<LabeledDataset> samples;  // origin = global running index
};

SyntheticDraw draw_synthetic(const SyntheticSpec& spec, Rng& rng);

/// Generates SYNTHETIC(alpha, beta) and splits each client 80/20 train/test.
ClientPartition generate_synthetic(const SyntheticSpec& spec, Rng& rng);

/// 80/20 train/test split of one client's data, stratified by class where
/// possible. Both halves are non-empty; requires at least 2 samples.
ClientData split_train_test(const LabeledDataset& data, Rng& rng);

/// Label-skew assignment: per class, client shares ~ Dirichlet(concentration).
/// Clients left with fewer than 2 samples are topped up from the largest
/// client. Returns each client's raw (unsplit) data.
std::vector<LabeledDataset> dirichlet_assign(const LabeledDataset& source, std::size_t num_clients,
                                             double concentration, Rng& rng);

/// dirichlet_assign followed by a per-client 80/20 train/test split.
ClientPartition dirichlet_partition(const LabeledDataset& source, std::size_t num_clients,
                                    double concentration, Rng& rng);

/// Exactly per_class_counts[c] samples of class c, drawn without replacement.
LabeledDataset build_validation_set(const LabeledDataset& source,
                                    std::span<const std::size_t> per_class_counts, Rng& rng);

/// Splits `source` into (pool, rest) where pool holds exactly `per_class`
/// random samples of every class. Throws ConfigError if a class is short.
std::pair<LabeledDataset, LabeledDataset> reserve_per_class(const LabeledDataset& source,
                                                            std::size_t per_class, Rng& rng);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled to [0, 1] and flattened row-major.
LabeledDataset load_idx_images(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Numeric CSV with a header row; the final column is the integer label.
LabeledDataset load_csv(const std::filesystem::path& path);

}  // namespace fedaa
