#pragma once

// Distance-based client selection.
//
// Every participant's flattened upload is compared with every other by
// Euclidean distance. Row sums of the distance matrix score how far a client
// sits from the crowd; the clients with the smallest sums are kept and their
// min-max normalised sums become the agent's state.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fedaa/nn.hpp"

namespace fedaa {

enum class DistanceScope {
  kAllLayers,
  /// Only the weight+bias slice of the layer feeding the last hidden
  /// activation. Models without hidden layers fall back to all layers.
  kLastHiddenLayer,
};

struct SelectionResult {
  std::vector<int> selected_ids;     // ascending id
  std::vector<double> state;         // normalised row sums, aligned with selected_ids
  std::vector<double> raw_row_sums;  // aligned with selected_ids
  std::optional<Matrix> distance_matrix;  // participants x participants, input order
};

using Upload = std::pair<int, FlatParams>;

/// max(1, round-half-up(m_percent * n / 100)).
std::size_t selection_count(double m_percent, std::size_t n);

/// Min-max normalisation; a constant vector maps to all zeros.
std::vector<double> normalize_state(std::span<const double> row_sums);

/// Half-open index range [first, second) of the values compared under `scope`.
std::pair<std::size_t, std::size_t> distance_slice(const ArchSpec& arch, DistanceScope scope);

/// Symmetric pairwise L2 distance matrix with zero diagonal.
Matrix distance_matrix(std::span<const Upload> uploads, DistanceScope scope);

/// Selects the selection_count(m_percent, n) clients with the smallest row
/// sums (ties by ascending id). Uploads containing NaN/Inf sit at +inf from
/// everyone and are never selected; if every upload is non-finite a
/// SimulationError is thrown.
SelectionResult select_clients(std::span<const Upload> uploads, double m_percent, DistanceScope scope,
                               bool keep_matrix = false);

}  // namespace fedaa
