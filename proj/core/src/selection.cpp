#include "fedaa/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedaa/errors.hpp"

namespace fedaa {

std::size_t selection_count(double m_percent, std::size_t n) {
  if (!(m_percent > 0.0) || m_percent > 100.0) throw ConfigError("m_percent must be in (0, 100]");
  // Integer-valued products (the common case) must not be perturbed by FP noise.
  const double exact = m_percent * static_cast<double>(n) / 100.0;
  const auto count = static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));
  return std::clamp<std::size_t>(count, 1, std::max<std::size_t>(n, 1));
}

std::vector<double> normalize_state(std::span<const double> row_sums) {
  if (row_sums.empty()) throw ConfigError("cannot normalise an empty state");
  const auto [lo, hi] = std::minmax_element(row_sums.begin(), row_sums.end());
  const double min = *lo, range = *hi - *lo;
  std::vector<double> out(row_sums.size(), 0.0);
  if (!(range > 0.0) || !std::isfinite(range)) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (row_sums[i] - min) / range;
  return out;
}

std::pair<std::size_t, std::size_t> distance_slice(const ArchSpec& arch, DistanceScope scope) {
  if (scope == DistanceScope::kLastHiddenLayer && !arch.hidden_dims.empty()) {
    const LayerSlice s = layer_slice(arch, arch.num_layers() - 2);
    return {s.begin(), s.end()};
  }
  return {0, param_count(arch)};
}

namespace {

bool finite_slice(const FlatParams& p, std::size_t b, std::size_t e) {
  for (std::size_t i = b; i < e; ++i) {
    if (!std::isfinite(p.values[i])) return false;
  }
  return true;
}

}  // namespace

Matrix distance_matrix(std::span<const Upload> uploads, DistanceScope scope) {
  const std::size_t n = uploads.size();
  Matrix c(n, n, 0.0);
  if (n == 0) return c;
  const ArchSpec& arch = uploads.front().second.arch;
  const auto [b, e] = distance_slice(arch, scope);
  std::vector<bool> finite(n);
  for (std::size_t i = 0; i < n; ++i) {
    const FlatParams& p = uploads[i].second;
    if (p.size() != uploads.front().second.size() || !(p.arch == arch)) {
      throw ConfigError("selection: uploads differ in architecture");
    }
    finite[i] = finite_slice(p, b, e);
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d = kInf;
      if (finite[i] && finite[j]) {
        const double* x = uploads[i].second.values.data();
        const double* y = uploads[j].second.values.data();
        double acc = 0.0;
        for (std::size_t k = b; k < e; ++k) {
          const double diff = x[k] - y[k];
          acc += diff * diff;
        }
        d = std::sqrt(acc);
      }
      c(i, j) = d;
      c(j, i) = d;
    }
  }
  return c;
}

SelectionResult select_clients(std::span<const Upload> uploads, double m_percent, DistanceScope scope,
                               bool keep_matrix) {
  const std::size_t n = uploads.size();
  if (n < 2) throw ConfigError("selection needs at least 2 uploads");
  const std::size_t want = selection_count(m_percent, n);

  Matrix c = distance_matrix(uploads, scope);
  const auto [b, e] = distance_slice(uploads.front().second.arch, scope);
  std::vector<bool> finite(n);
  std::size_t n_finite = 0;
  for (std::size_t i = 0; i < n; ++i) n_finite += (finite[i] = finite_slice(uploads[i].second, b, e));
  if (n_finite == 0) throw SimulationError("selection: every upload is non-finite");

  // Non-finite clients only affect their own row sum.
  std::vector<double> row_sum(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    if (!finite[i]) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (finite[j]) s += c(i, j);
    }
    row_sum[i] = s;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t z) {
    if (row_sum[a] != row_sum[z]) return row_sum[a] < row_sum[z];
    return uploads[a].first < uploads[z].first;
  });
  order.resize(std::min(want, n_finite));
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t z) { return uploads[a].first < uploads[z].first; });

  SelectionResult r;
  for (std::size_t i : order) {
    r.selected_ids.push_back(uploads[i].first);
    r.raw_row_sums.push_back(row_sum[i]);
  }
  r.state = normalize_state(r.raw_row_sums);
  if (keep_matrix) r.distance_matrix = std::move(c);
  return r;
}

}  // namespace fedaa
