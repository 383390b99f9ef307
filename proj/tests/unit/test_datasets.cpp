#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "fedaa/datasets.hpp"
#include "fedaa/errors.hpp"
#include "support/oracles.hpp"

using namespace fedaa;
namespace fs = std::filesystem;

namespace {

LabeledDataset balanced_source(std::size_t per_class, int classes, std::size_t dim, Rng& rng) {
  LabeledDataset d;
  d.num_classes = classes;
  d.features = Matrix(per_class * classes, dim);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : d.features.data) v = n(rng);
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) d.labels.push_back(c);
  }
  d.origin.resize(d.size());
  std::iota(d.origin.begin(), d.origin.end(), std::size_t{0});
  return d;
}

std::vector<std::size_t> all_origins(const ClientPartition& p) {
  std::vector<std::size_t> out;
  for (const auto& c : p.clients) {
    out.insert(out.end(), c.train.origin.begin(), c.train.origin.end());
    out.insert(out.end(), c.test.origin.begin(), c.test.origin.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// Writes an IDX image/label pair with 2x2 images.
void write_idx(const fs::path& images, const fs::path& labels, const std::vector<std::vector<unsigned char>>& pix,
               const std::vector<unsigned char>& labs) {
  std::ofstream im(images, std::ios::binary);
  put_be32(im, 0x00000803u);
  put_be32(im, static_cast<std::uint32_t>(pix.size()));
  put_be32(im, 2);
  put_be32(im, 2);
  for (const auto& p : pix) im.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size()));
  std::ofstream lb(labels, std::ios::binary);
  put_be32(lb, 0x00000801u);
  put_be32(lb, static_cast<std::uint32_t>(labs.size()));
  lb.write(reinterpret_cast<const char*>(labs.data()), static_cast<std::streamsize>(labs.size()));
}

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() / "fedaa_test_datasets";
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("synthetic generator") {
  SUBCASE("alpha = beta = 0 gives zero shifts") {
    SyntheticSpec spec;
    spec.num_clients = 5;
    Rng rng(1);
    const auto draw = draw_synthetic(spec, rng);
    for (const auto& m : draw.models) {
      CHECK(m.u == 0.0);
      CHECK(m.mu == 0.0);
    }
  }
  SUBCASE("feature variance follows j^-1.2") {
    SyntheticSpec spec;
    Rng rng(2);
    const auto model = draw_synthetic_model(spec, rng);
    const auto data = sample_synthetic(model, 10000, rng);
    for (std::size_t j : {1u, 10u, 60u}) {
      std::vector<double> col(data.size());
      for (std::size_t r = 0; r < data.size(); ++r) col[r] = data.features(r, j - 1);
      const double sd = fedaa::testing::sample_std(col);
      const double want = std::pow(static_cast<double>(j), -1.2);
      CHECK(std::abs(sd * sd - want) / want < 0.10);
      CHECK(std::abs(fedaa::testing::mean(col) - model.mean[j - 1]) < 4.0 * std::sqrt(want / 10000.0) + 1e-12);
    }
  }
  SUBCASE("labels are the argmax of W x + b") {
    SyntheticSpec spec;
    Rng rng(3);
    const auto model = draw_synthetic_model(spec, rng);
    const auto data = sample_synthetic(model, 200, rng);
    for (std::size_t r = 0; r < data.size(); ++r) {
      int best = 0;
      double best_z = -1e300;
      for (int c = 0; c < SyntheticSpec::kNumClasses; ++c) {
        double z = model.bias[c];
        for (std::size_t j = 0; j < SyntheticSpec::kInputDim; ++j) z += model.weight(c, j) * data.features(r, j);
        if (z > best_z) best_z = z, best = c;
      }
      CHECK(data.labels[r] == best);
    }
  }
  SUBCASE("seeded determinism") {
    SyntheticSpec spec;
    spec.num_clients = 8;
    Rng a(5), b(5);
    CHECK(generate_synthetic(spec, a) == generate_synthetic(spec, b));
  }
  SUBCASE("split sizes and completeness") {
    SyntheticSpec spec;
    spec.num_clients = 6;
    spec.samples_per_client = {5, 20, 33, 100, 7, 50};
    Rng rng(6);
    const auto p = generate_synthetic(spec, rng);
    REQUIRE(p.clients.size() == 6);
    for (std::size_t k = 0; k < 6; ++k) {
      const auto& c = p.clients[k];
      CHECK(c.train.size() + c.test.size() == spec.samples_per_client[k]);
      CHECK(c.train.size() > 0);
      CHECK(c.test.size() > 0);
    }
    std::vector<std::size_t> want(215);
    std::iota(want.begin(), want.end(), std::size_t{0});
    CHECK(all_origins(p) == want);
  }
  SUBCASE("clients smaller than 5 are rejected") {
    SyntheticSpec spec;
    spec.num_clients = 2;
    spec.samples_per_client = {10, 4};
    Rng rng(1);
    CHECK_THROWS_AS(generate_synthetic(spec, rng), ConfigError);
  }
}

TEST_CASE("dirichlet partition") {
  Rng rng(10);
  const LabeledDataset src = balanced_source(200, 10, 3, rng);

  SUBCASE("completeness") {
    const auto p = dirichlet_partition(src, 30, 0.1, rng);
    std::vector<std::size_t> want(src.size());
    std::iota(want.begin(), want.end(), std::size_t{0});
    CHECK(all_origins(p) == want);
    for (const auto& c : p.clients) {
      CHECK(c.train.size() > 0);
      CHECK(c.test.size() > 0);
    }
  }
  SUBCASE("huge concentration is near uniform") {
    const auto parts = dirichlet_assign(src, 5, 1e6, rng);
    for (const auto& part : parts) {
      const auto counts = part.class_counts();
      for (auto n : counts) CHECK(std::abs(static_cast<double>(n) / part.size() - 0.1) < 0.05);
    }
  }
  SUBCASE("concentration 0.1 is strongly skewed") {
    // oracle: the same quantity computed directly from gamma draws
    std::gamma_distribution<double> g(0.1, 1.0);
    Rng oracle_rng(99);
    double oracle_share = 0.0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
      std::vector<double> w(10);
      for (double& x : w) x = g(oracle_rng);
      oracle_share += *std::max_element(w.begin(), w.end()) / std::accumulate(w.begin(), w.end(), 0.0);
    }
    oracle_share /= trials;
    CHECK(oracle_share > 0.5);

    const auto parts = dirichlet_assign(src, 100, 0.1, rng);
    double share = 0.0;
    for (const auto& part : parts) {
      const auto counts = part.class_counts();
      share += static_cast<double>(*std::max_element(counts.begin(), counts.end())) / part.size();
    }
    CHECK(share / parts.size() > 0.5);
  }
  SUBCASE("every client gets at least 2 samples") {
    const auto parts = dirichlet_assign(src, 100, 0.01, rng);
    for (const auto& part : parts) CHECK(part.size() >= 2);
  }
  SUBCASE("too small a source is rejected") {
    const LabeledDataset tiny = balanced_source(1, 10, 2, rng);
    CHECK_THROWS_AS(dirichlet_partition(tiny, 5, 0.1, rng), ConfigError);
  }
}

TEST_CASE("validation set") {
  Rng rng(20);
  const LabeledDataset src = balanced_source(150, 10, 2, rng);
  SUBCASE("balanced 100 per class") {
    const std::vector<std::size_t> counts(10, 100);
    const auto v = build_validation_set(src, counts, rng);
    CHECK(v.size() == 1000);
    for (auto n : v.class_counts()) CHECK(n == 100);
  }
  SUBCASE("unfair 100,100,10x8") {
    std::vector<std::size_t> counts(10, 10);
    counts[0] = counts[1] = 100;
    const auto v = build_validation_set(src, counts, rng);
    CHECK(v.size() == 280);  // 100 + 100 + 8 * 10
    CHECK(v.class_counts() == counts);
  }
  SUBCASE("zero count is an error") {
    std::vector<std::size_t> counts(10, 10);
    counts[4] = 0;
    CHECK_THROWS_AS(build_validation_set(src, counts, rng), ConfigError);
  }
  SUBCASE("insufficient class names the class") {
    std::vector<std::size_t> counts(10, 10);
    counts[7] = 151;
    try {
      build_validation_set(src, counts, rng);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("class 7") != std::string::npos);
    }
  }
  SUBCASE("reserved pool is disjoint from the rest") {
    const auto [pool, rest] = reserve_per_class(src, 30, rng);
    CHECK(pool.size() == 300);
    CHECK(rest.size() == src.size() - 300);
    std::set<std::size_t> a(pool.origin.begin(), pool.origin.end());
    for (auto o : rest.origin) CHECK(a.count(o) == 0);
  }
}

TEST_CASE("IDX loader") {
  const fs::path dir = temp_dir();
  const fs::path im = dir / "img.idx", lb = dir / "lab.idx";
  SUBCASE("round trip of a 2-image fixture") {
    write_idx(im, lb, {{0, 255, 128, 1}, {255, 0, 0, 64}}, {3, 7});
    const auto d = load_idx_images(im, lb);
    CHECK(d.size() == 2);
    CHECK(d.dim() == 4);
    CHECK(d.labels == std::vector<int>{3, 7});
    CHECK(d.features(0, 1) == 1.0);
    CHECK(d.features(0, 0) == 0.0);
    CHECK(d.features(0, 2) == doctest::Approx(128.0 / 255.0));
    CHECK(d.features(1, 3) == doctest::Approx(64.0 / 255.0));
  }
  SUBCASE("label count mismatch") {
    write_idx(im, lb, {{0, 0, 0, 0}, {1, 1, 1, 1}}, {1, 2, 3});
    CHECK_THROWS_AS(load_idx_images(im, lb), IngestionError);
  }
  SUBCASE("bad magic reports offset 0") {
    write_idx(im, lb, {{0, 0, 0, 0}}, {1});
    {
      std::fstream f(im, std::ios::binary | std::ios::in | std::ios::out);
      f.seekp(3);
      f.put(0x01);
    }
    try {
      load_idx_images(im, lb);
      FAIL("expected IngestionError");
    } catch (const IngestionError& e) {
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("truncated image data") {
    write_idx(im, lb, {{0, 0, 0, 0}, {1, 1, 1, 1}}, {1, 2});
    fs::resize_file(im, fs::file_size(im) - 3);
    CHECK_THROWS_AS(load_idx_images(im, lb), IngestionError);
  }
}

TEST_CASE("CSV loader") {
  const fs::path path = temp_dir() / "data.csv";
  SUBCASE("header, features, label last") {
    std::ofstream(path) << "a,b,label\n0.5,1.5,1\n-2,3,0\n";
    const auto d = load_csv(path);
    CHECK(d.size() == 2);
    CHECK(d.dim() == 2);
    CHECK(d.labels == std::vector<int>{1, 0});
    CHECK(d.num_classes == 2);
    CHECK(d.features(1, 0) == -2.0);
  }
  SUBCASE("bad cell reports its line") {
    std::ofstream(path) << "a,label\n1,0\nx,1\n";
    try {
      load_csv(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
}
