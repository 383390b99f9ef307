#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fedaa/clients.hpp"
#include "fedaa/errors.hpp"
#include "support/oracles.hpp"

using namespace fedaa;

namespace {

ClientRecord make_client(int id, std::uint64_t seed, std::optional<AttackSpec> attack = std::nullopt) {
  SyntheticSpec spec;
  spec.num_clients = 1;
  spec.samples_per_client = {40};
  Rng rng(seed);
  ClientRecord c;
  c.id = id;
  c.role = attack ? ClientRole::kMalicious : ClientRole::kBenign;
  c.attack = attack;
  c.data = generate_synthetic(spec, rng).clients.front();
  c.local_model = MlpModel::zeros({60, {}, 10});
  return c;
}

}  // namespace

TEST_CASE("attack defaults") {
  CHECK(AttackSpec::default_tau(AttackKind::kSameValue) == 100.0);
  CHECK(AttackSpec::default_tau(AttackKind::kSignFlip) == 10.0);
  CHECK(AttackSpec::default_tau(AttackKind::kGaussian) == 100.0);
  CHECK(AttackSpec::with_defaults(AttackKind::kIpm).ipm_epsilon == 0.5);
  CHECK(needs_honest_update(AttackKind::kSignFlip));
  CHECK_FALSE(needs_honest_update(AttackKind::kSameValue));
  CHECK_FALSE(needs_honest_update(AttackKind::kGaussian));
}

TEST_CASE("same-value attack") {
  const ArchSpec arch{5, {3}, 2};
  Rng rng(1);
  const auto v = attack_same_value(arch, 100.0, rng);
  CHECK(v.size() == param_count(arch));
  for (double x : v.values) CHECK(x == v.values.front());
  for (double x : attack_same_value(arch, 0.0, rng).values) CHECK(x == 0.0);

  std::vector<double> ms(10000);
  for (double& m : ms) m = attack_same_value(arch, 100.0, rng).values.front();
  const double sd = fedaa::testing::sample_std(ms);
  CHECK(sd >= 97.0);
  CHECK(sd <= 103.0);
}

TEST_CASE("sign-flip attack") {
  const ArchSpec arch{1, {}, 2};
  const FlatParams honest{{1.0, -3.0, 0.5, 2.0}, arch};
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto out = attack_sign_flip(honest, 10.0, rng);
    const double dot = std::inner_product(out.values.begin(), out.values.end(), honest.values.begin(), 0.0);
    CHECK(dot <= 0.0);
    // every coordinate is the same non-positive multiple of honest
    const double k = out.values[0] / honest.values[0];
    CHECK(k <= 0.0);
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.values[j] == doctest::Approx(k * honest.values[j]));
  }
  for (double x : attack_sign_flip(honest, 0.0, rng).values) CHECK(x == 0.0);
}

TEST_CASE("gaussian attack") {
  const ArchSpec arch{100, {}, 100};  // 10,100 params
  Rng rng(3);
  const auto v = attack_gaussian(arch, 100.0, rng);
  const double sd = fedaa::testing::sample_std(v.values);
  CHECK(sd >= 97.0);
  CHECK(sd <= 103.0);
  for (double x : attack_gaussian(arch, 0.0, rng).values) CHECK(x == 0.0);
  Rng other(4);
  CHECK(attack_gaussian(arch, 1.0, other).values != attack_gaussian(arch, 1.0, rng).values);
}

TEST_CASE("IPM attack") {
  const ArchSpec arch{1, {}, 1};  // 2 params
  const std::vector<FlatParams> one{{{2.0, 4.0}, arch}};
  const auto out = attack_ipm(one, 0.5);
  CHECK(out.values == std::vector<double>{-1.0, -2.0});

  const std::vector<FlatParams> two{{{1.0, 3.0}, arch}, {{3.0, -1.0}, arch}};
  const auto out2 = attack_ipm(two, 0.5);
  CHECK(out2.values == std::vector<double>{-1.0, -0.5});
  const double dot = out2.values[0] * 2.0 + out2.values[1] * 1.0;  // with mean [2,1]
  CHECK(dot <= 0.0);
  CHECK_THROWS_AS(attack_ipm({}, 0.5), SimulationError);
}

TEST_CASE("local_update") {
  const ArchSpec arch{60, {}, 10};
  Rng init(7);
  const FlatParams global = MlpModel::glorot(arch, init).params;

  SUBCASE("benign with lr 0 returns global") {
    ClientRecord c = make_client(0, 1);
    Rng rng(1);
    CHECK(local_update(c, global, SgdConfig{0.0, 0.0, 64, 20}, rng) == global);
  }
  SUBCASE("identical data and seeds give identical uploads") {
    ClientRecord a = make_client(0, 5), b = make_client(1, 5);
    Rng ra(9), rb(9);
    const auto ua = local_update(a, global, SgdConfig{}, ra);
    const auto ub = local_update(b, global, SgdConfig{}, rb);
    CHECK(ua == ub);
    CHECK(a.local_model.params == ua);
  }
  SUBCASE("same-value client ignores its data") {
    ClientRecord a = make_client(0, 5, AttackSpec::with_defaults(AttackKind::kSameValue));
    ClientRecord b = make_client(0, 6, AttackSpec::with_defaults(AttackKind::kSameValue));
    Rng ra(3), rb(3);
    CHECK(local_update(a, global, SgdConfig{}, ra) == local_update(b, global, SgdConfig{}, rb));
  }
  SUBCASE("attack never alters stored data") {
    ClientRecord c = make_client(0, 5, AttackSpec::with_defaults(AttackKind::kSignFlip));
    const ClientData before = c.data;
    Rng rng(3);
    const auto up = local_update(c, global, SgdConfig{}, rng);
    CHECK(c.data == before);
    CHECK(c.local_model.params != up);
  }
  SUBCASE("arch mismatch") {
    ClientRecord c = make_client(0, 5);
    Rng rng(3);
    const FlatParams wrong{std::vector<double>(11, 0.0), ArchSpec{10, {}, 1}};
    CHECK_THROWS_AS(local_update(c, wrong, SgdConfig{}, rng), ConfigError);
  }
}

TEST_CASE("malicious id draw") {
  Rng rng(1);
  const auto ids = draw_malicious_ids(20, 0.3, rng);
  CHECK(ids.size() == 6);
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  CHECK(draw_malicious_ids(20, 0.0, rng).empty());
  CHECK_THROWS_AS(draw_malicious_ids(20, 0.5, rng), ConfigError);
}
