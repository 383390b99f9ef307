#include "fedaa/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "fedaa/errors.hpp"

namespace fedaa {

namespace {

// N(mean, sd) that also accepts sd == 0.
double normal(Rng& rng, double mean, double sd) {
  if (sd == 0.0) return mean;
  return std::normal_distribution<double>(mean, sd)(rng);
}

std::vector<std::vector<std::size_t>> rows_by_class(const LabeledDataset& d) {
  std::vector<std::vector<std::size_t>> by(static_cast<std::size_t>(d.num_classes));
  for (std::size_t r = 0; r < d.size(); ++r) by[static_cast<std::size_t>(d.labels[r])].push_back(r);
  return by;
}

}  // namespace

void LabeledDataset::validate() const {
  if (labels.empty()) throw ConfigError("dataset is empty");
  if (num_classes <= 0) throw ConfigError("num_classes must be positive");
  if (features.rows != labels.size()) throw ConfigError("feature rows do not match label count");
  if (!origin.empty() && origin.size() != labels.size()) throw ConfigError("origin length mismatch");
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || labels[r] >= num_classes) {
      throw ConfigError("label " + std::to_string(labels[r]) + " at row " + std::to_string(r) + " out of range");
    }
  }
  for (double v : features.data) {
    if (!std::isfinite(v)) throw ConfigError("dataset contains a non-finite feature");
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.features = gather_rows(features, rows);
  out.labels.reserve(rows.size());
  out.origin.reserve(rows.size());
  for (std::size_t r : rows) {
    out.labels.push_back(labels[r]);
    out.origin.push_back(origin.empty() ? r : origin[r]);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> c(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) ++c[static_cast<std::size_t>(y)];
  return c;
}

LabeledDataset concat(std::span<const LabeledDataset> parts) {
  LabeledDataset out;
  if (parts.empty()) return out;
  out.num_classes = parts.front().num_classes;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.num_classes != out.num_classes) throw ConfigError("concat: class counts differ");
    if (p.size() > 0 && p.dim() != parts.front().dim()) throw ConfigError("concat: widths differ");
    rows += p.size();
  }
  out.features = Matrix(0, parts.front().dim());
  out.features.rows = rows;
  out.features.data.reserve(rows * out.features.cols);
  for (const auto& p : parts) {
    out.features.data.insert(out.features.data.end(), p.features.data.begin(), p.features.data.end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    if (p.origin.empty()) {
      throw ConfigError("concat: part without origin");
    }
    out.origin.insert(out.origin.end(), p.origin.begin(), p.origin.end());
  }
  return out;
}

// --- synthetic -------------------------------------------------------------

SyntheticClientModel draw_synthetic_model(const SyntheticSpec& spec, Rng& rng) {
  constexpr std::size_t d = SyntheticSpec::kInputDim;
  constexpr std::size_t k = SyntheticSpec::kNumClasses;
  SyntheticClientModel m;
  m.u = normal(rng, 0.0, spec.synthetic_alpha);
  m.weight = Matrix(k, d);
  for (double& w : m.weight.data) w = normal(rng, m.u, 1.0);
  m.bias.resize(k);
  for (double& b : m.bias) b = normal(rng, m.u, 1.0);
  m.mu = normal(rng, 0.0, spec.synthetic_beta);
  m.mean.resize(d);
  for (double& v : m.mean) v = normal(rng, m.mu, 1.0);
  return m;
}

LabeledDataset sample_synthetic(const SyntheticClientModel& model, std::size_t n, Rng& rng) {
  constexpr std::size_t d = SyntheticSpec::kInputDim;
  constexpr std::size_t k = SyntheticSpec::kNumClasses;
  LabeledDataset out;
  out.num_classes = static_cast<int>(k);
  out.features = Matrix(n, d);
  out.labels.resize(n);
  std::vector<double> sd(d);
  for (std::size_t j = 0; j < d; ++j) sd[j] = std::pow(static_cast<double>(j + 1), -0.6);
  std::vector<double> logits(k);
  for (std::size_t r = 0; r < n; ++r) {
    auto x = out.features.row(r);
    for (std::size_t j = 0; j < d; ++j) x[j] = normal(rng, model.mean[j], sd[j]);
    for (std::size_t c = 0; c < k; ++c) {
      double acc = model.bias[c];
      for (std::size_t j = 0; j < d; ++j) acc += model.weight(c, j) * x[j];
      logits[c] = acc;
    }
    softmax_inplace(logits);
    out.labels[r] = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  return out;
}

SyntheticDraw draw_synthetic(const SyntheticSpec& spec, Rng& rng) {
  if (spec.num_clients == 0) throw ConfigError("synthetic: num_clients must be positive");
  if (spec.synthetic_alpha < 0.0 || spec.synthetic_beta < 0.0) {
    throw ConfigError("synthetic: alpha and beta must be non-negative");
  }
  std::vector<std::size_t> sizes = spec.samples_per_client;
  if (sizes.empty()) {
    if (spec.size_min > spec.size_max) throw ConfigError("synthetic: size_min exceeds size_max");
    std::lognormal_distribution<double> ln(spec.size_log_mean, spec.size_log_sigma);
    sizes.resize(spec.num_clients);
    for (auto& s : sizes) {
      const double v = std::clamp(ln(rng), static_cast<double>(spec.size_min), static_cast<double>(spec.size_max));
      s = static_cast<std::size_t>(v);
    }
  }
  if (sizes.size() != spec.num_clients) throw ConfigError("synthetic: samples_per_client length != num_clients");
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] < 5) {
      throw ConfigError("synthetic: client " + std::to_string(k) + " has fewer than 5 samples");
    }
  }

  SyntheticDraw draw;
  std::size_t next_origin = 0;
  for (std::size_t k = 0; k < spec.num_clients; ++k) {
    draw.models.push_back(draw_synthetic_model(spec, rng));
    LabeledDataset s = sample_synthetic(draw.models.back(), sizes[k], rng);
    s.origin.resize(s.size());
    std::iota(s.origin.begin(), s.origin.end(), next_origin);
    next_origin += s.size();
    draw.samples.push_back(std::move(s));
  }
  return draw;
}

ClientPartition generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
  SyntheticDraw draw = draw_synthetic(spec, rng);
  ClientPartition p;
  p.provenance = "synthetic(" + std::to_string(spec.synthetic_alpha) + "," + std::to_string(spec.synthetic_beta) + ")";
  for (const auto& s : draw.samples) p.clients.push_back(split_train_test(s, rng));
  return p;
}

// --- splitting / partitioning -----------------------------------------------

ClientData split_train_test(const LabeledDataset& data, Rng& rng) {
  const std::size_t n = data.size();
  if (n < 2) throw ConfigError("need at least 2 samples to split train/test");
  std::size_t n_test = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  auto by = rows_by_class(data);
  for (auto& rows : by) std::shuffle(rows.begin(), rows.end(), rng);

  // Stratified quotas: floor share per class, remainder by largest fraction.
  std::vector<std::size_t> quota(by.size());
  std::vector<std::pair<double, std::size_t>> frac;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by.size(); ++c) {
    const double exact = static_cast<double>(by[c].size()) * static_cast<double>(n_test) / static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    frac.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n_test; ++i) {
    const std::size_t c = frac[i % frac.size()].second;
    if (quota[c] < by[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }

  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t c = 0; c < by.size(); ++c) {
    test_rows.insert(test_rows.end(), by[c].begin(), by[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
    train_rows.insert(train_rows.end(), by[c].begin() + static_cast<std::ptrdiff_t>(quota[c]), by[c].end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return ClientData{data.subset(train_rows), data.subset(test_rows)};
}

std::vector<LabeledDataset> dirichlet_assign(const LabeledDataset& source, std::size_t num_clients,
                                             double concentration, Rng& rng) {
  if (num_clients == 0) throw ConfigError("dirichlet: num_clients must be positive");
  if (!(concentration > 0.0)) throw ConfigError("dirichlet: concentration must be positive");
  if (source.size() < num_clients * 10) {
    throw ConfigError("dirichlet: source has " + std::to_string(source.size()) + " samples, need at least " +
                      std::to_string(num_clients * 10));
  }

  std::vector<std::vector<std::size_t>> assigned(num_clients);
  std::gamma_distribution<double> gamma(concentration, 1.0);
  for (auto rows : rows_by_class(source)) {
    if (rows.empty()) continue;
    std::shuffle(rows.begin(), rows.end(), rng);
    std::vector<double> share(num_clients);
    double total = 0.0;
    for (auto& s : share) total += (s = gamma(rng));
    if (!(total > 0.0)) {
      // Every gamma draw underflowed: put the class on one client.
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<std::size_t>(0, num_clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    double cum = 0.0;
    std::size_t begin = 0;
    for (std::size_t k = 0; k < num_clients; ++k) {
      cum += share[k] / total;
      std::size_t end = k + 1 == num_clients
                            ? rows.size()
                            : std::min(rows.size(), static_cast<std::size_t>(std::floor(cum * static_cast<double>(rows.size()))));
      end = std::max(end, begin);
      assigned[k].insert(assigned[k].end(), rows.begin() + static_cast<std::ptrdiff_t>(begin),
                         rows.begin() + static_cast<std::ptrdiff_t>(end));
      begin = end;
    }
  }

  // Every client needs 2 samples to form non-empty train and test splits.
  constexpr std::size_t kMinSamples = 2;
  for (std::size_t k = 0; k < num_clients; ++k) {
    while (assigned[k].size() < kMinSamples) {
      std::size_t donor = 0;
      for (std::size_t j = 1; j < num_clients; ++j) {
        if (assigned[j].size() > assigned[donor].size()) donor = j;
      }
      if (donor == k || assigned[donor].size() <= kMinSamples) {
        throw ConfigError("dirichlet: cannot give every client " + std::to_string(kMinSamples) + " samples");
      }
      assigned[k].push_back(assigned[donor].back());
      assigned[donor].pop_back();
    }
  }

  std::vector<LabeledDataset> out;
  out.reserve(num_clients);
  for (auto& rows : assigned) {
    std::sort(rows.begin(), rows.end());
    out.push_back(source.subset(rows));
  }
  return out;
}

ClientPartition dirichlet_partition(const LabeledDataset& source, std::size_t num_clients, double concentration,
                                    Rng& rng) {
  ClientPartition p;
  p.provenance = "dirichlet(" + std::to_string(concentration) + ")";
  for (const auto& raw : dirichlet_assign(source, num_clients, concentration, rng)) {
    p.clients.push_back(split_train_test(raw, rng));
  }
  return p;
}

LabeledDataset build_validation_set(const LabeledDataset& source, std::span<const std::size_t> per_class_counts,
                                    Rng& rng) {
  if (per_class_counts.size() != static_cast<std::size_t>(source.num_classes)) {
    throw ConfigError("validation: expected " + std::to_string(source.num_classes) + " per-class counts, got " +
                      std::to_string(per_class_counts.size()));
  }
  auto by = rows_by_class(source);
  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < by.size(); ++c) {
    if (per_class_counts[c] == 0) {
      throw ConfigError("validation: class " + std::to_string(c) + " requested with count 0");
    }
    if (by[c].size() < per_class_counts[c]) {
      throw ConfigError("validation: class " + std::to_string(c) + " has " + std::to_string(by[c].size()) +
                        " samples, " + std::to_string(per_class_counts[c]) + " requested");
    }
    std::shuffle(by[c].begin(), by[c].end(), rng);
    picked.insert(picked.end(), by[c].begin(), by[c].begin() + static_cast<std::ptrdiff_t>(per_class_counts[c]));
  }
  std::sort(picked.begin(), picked.end());
  return source.subset(picked);
}

std::pair<LabeledDataset, LabeledDataset> reserve_per_class(const LabeledDataset& source, std::size_t per_class,
                                                            Rng& rng) {
  auto by = rows_by_class(source);
  std::vector<std::size_t> pool, rest;
  for (std::size_t c = 0; c < by.size(); ++c) {
    if (by[c].size() < per_class) {
      throw ConfigError("reserve: class " + std::to_string(c) + " has only " + std::to_string(by[c].size()) +
                        " samples, " + std::to_string(per_class) + " requested");
    }
    std::shuffle(by[c].begin(), by[c].end(), rng);
    pool.insert(pool.end(), by[c].begin(), by[c].begin() + static_cast<std::ptrdiff_t>(per_class));
    rest.insert(rest.end(), by[c].begin() + static_cast<std::ptrdiff_t>(per_class), by[c].end());
  }
  std::sort(pool.begin(), pool.end());
  std::sort(rest.begin(), rest.end());
  return {source.subset(pool), source.subset(rest)};
}

// --- file loaders -------------------------------------------------------------

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t offset) {
  if (offset + 4 > b.size()) throw IngestionError("truncated IDX header", b.size());
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

}  // namespace

LabeledDataset load_idx_images(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_all(images);
  const auto lab = read_all(labels);

  if (read_be32(img, 0) != 0x00000803u) throw IngestionError("bad IDX image magic in " + images.string(), 0);
  const std::size_t n = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  const std::size_t width = rows * cols;
  constexpr std::size_t kImgHeader = 16;
  if (img.size() < kImgHeader + n * width) {
    throw IngestionError("truncated IDX image data in " + images.string(), img.size());
  }

  if (read_be32(lab, 0) != 0x00000801u) throw IngestionError("bad IDX label magic in " + labels.string(), 0);
  const std::size_t n_labels = read_be32(lab, 4);
  if (n_labels != n) {
    throw IngestionError("label count " + std::to_string(n_labels) + " does not match image count " +
                             std::to_string(n),
                         4);
  }
  constexpr std::size_t kLabHeader = 8;
  if (lab.size() < kLabHeader + n) throw IngestionError("truncated IDX label data in " + labels.string(), lab.size());
  if (n == 0) throw IngestionError("IDX file holds no images", 4);

  LabeledDataset out;
  out.features = Matrix(n, width);
  for (std::size_t i = 0; i < n * width; ++i) out.features.data[i] = static_cast<double>(img[kImgHeader + i]) / 255.0;
  out.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = lab[kLabHeader + i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.num_classes = max_label + 1;
  out.origin.resize(n);
  std::iota(out.origin.begin(), out.origin.end(), std::size_t{0});
  return out;
}

LabeledDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing CSV header", 1);
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 2) throw ParseError("CSV needs at least one feature and a label column", 1);

  LabeledDataset out;
  out.features = Matrix(0, cols - 1);
  int line_no = 1;
  int max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') throw ParseError("non-numeric cell '" + cell + "'", line_no);
      row.push_back(v);
    }
    if (row.size() != cols) throw ParseError("expected " + std::to_string(cols) + " columns", line_no);
    const double label = row.back();
    if (label < 0 || label != std::floor(label)) throw ParseError("label must be a non-negative integer", line_no);
    out.features.data.insert(out.features.data.end(), row.begin(), row.end() - 1);
    ++out.features.rows;
    out.labels.push_back(static_cast<int>(label));
    max_label = std::max(max_label, out.labels.back());
  }
  out.num_classes = max_label + 1;
  out.origin.resize(out.labels.size());
  std::iota(out.origin.begin(), out.origin.end(), std::size_t{0});
  out.validate();
  return out;
}

}  // namespace fedaa
