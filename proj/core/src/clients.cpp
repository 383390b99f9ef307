#include "fedaa/clients.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedaa/errors.hpp"

namespace fedaa {

namespace {

double draw_m(double tau, Rng& rng) {
  if (tau == 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, tau)(rng);
}

}  // namespace

double AttackSpec::default_tau(AttackKind kind) {
  switch (kind) {
    case AttackKind::kSameValue: return 100.0;
    case AttackKind::kSignFlip: return 10.0;
    case AttackKind::kGaussian: return 100.0;
    case AttackKind::kIpm: return 0.0;
  }
  return 0.0;
}

AttackSpec AttackSpec::with_defaults(AttackKind kind) { return AttackSpec{kind, default_tau(kind), 0.5}; }

bool needs_honest_update(AttackKind kind) {
  return kind == AttackKind::kSignFlip;
}

FlatParams attack_same_value(const ArchSpec& arch, double tau, Rng& rng) {
  const std::size_t dim = param_count(arch);
  if (dim == 0) throw ConfigError("attack: empty parameter vector");
  return FlatParams{std::vector<double>(dim, draw_m(tau, rng)), arch};
}

FlatParams attack_sign_flip(const FlatParams& honest, double tau, Rng& rng) {
  const double scale = -std::abs(draw_m(tau, rng));
  FlatParams out = honest;
  for (double& v : out.values) v *= scale;
  return out;
}

FlatParams attack_gaussian(const ArchSpec& arch, double tau, Rng& rng) {
  const std::size_t dim = param_count(arch);
  if (dim == 0) throw ConfigError("attack: empty parameter vector");
  FlatParams out{std::vector<double>(dim, 0.0), arch};
  if (tau == 0.0) return out;
  std::normal_distribution<double> dist(0.0, tau);
  for (double& v : out.values) v = dist(rng);
  return out;
}

FlatParams attack_ipm(std::span<const FlatParams> benign_uploads, double epsilon) {
  if (benign_uploads.empty()) throw SimulationError("IPM attack needs at least one benign upload");
  FlatParams out{std::vector<double>(benign_uploads.front().size(), 0.0), benign_uploads.front().arch};
  for (const auto& u : benign_uploads) {
    if (u.size() != out.size()) throw ConfigError("IPM: benign uploads differ in length");
    for (std::size_t i = 0; i < u.size(); ++i) out.values[i] += u.values[i];
  }
  const double scale = -epsilon / static_cast<double>(benign_uploads.size());
  for (double& v : out.values) v *= scale;
  return out;
}

FlatParams local_update(ClientRecord& client, const FlatParams& global_params, const SgdConfig& cfg, Rng& rng,
                        std::span<const FlatParams> benign_uploads) {
  if (!(global_params.arch == client.local_model.arch()) || global_params.size() != client.local_model.params.size()) {
    throw ConfigError("client " + std::to_string(client.id) + ": global parameters do not match the client architecture");
  }
  if (client.is_malicious() != client.attack.has_value()) {
    throw ConfigError("client " + std::to_string(client.id) + ": role and attack disagree");
  }

  auto train = [&] {
    MlpModel model = MlpModel::from_params(global_params);
    sgd_train(model, client.data.train.features, client.data.train.labels, cfg, rng);
    client.local_model = model;
    return model.params;
  };

  if (!client.is_malicious()) return train();

  const AttackSpec& a = *client.attack;
  switch (a.kind) {
    case AttackKind::kSameValue: return attack_same_value(global_params.arch, a.tau, rng);
    case AttackKind::kGaussian: return attack_gaussian(global_params.arch, a.tau, rng);
    case AttackKind::kSignFlip: {
      const FlatParams honest = train();
      return attack_sign_flip(honest, a.tau, rng);
    }
    case AttackKind::kIpm: return attack_ipm(benign_uploads, a.ipm_epsilon);
  }
  throw ConfigError("unknown attack kind");
}

std::vector<int> draw_malicious_ids(std::size_t n, double malicious_fraction, Rng& rng) {
  if (malicious_fraction < 0.0 || malicious_fraction >= 0.5) {
    throw ConfigError("malicious_fraction must be in [0, 0.5)");
  }
  const auto count = static_cast<std::size_t>(std::floor(malicious_fraction * static_cast<double>(n) + 1e-9));
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace fedaa
