#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fedaa/datasets.hpp"
#include "fedaa/nn.hpp"
#include "fedaa/rng.hpp"

namespace fedaa {

enum class AttackKind { kSameValue, kSignFlip, kGaussian, kIpm };

struct AttackSpec {
  AttackKind kind = AttackKind::kSameValue;
  double tau = 100.0;         // std of the attack draw m ~ N(0, tau^2)
  double ipm_epsilon = 0.5;   // IPM scale

  /// Default intensity for each kind: same_value 100, sign_flip 10, gaussian 100.
  static double default_tau(AttackKind kind);
  static AttackSpec with_defaults(AttackKind kind);

  bool operator==(const AttackSpec&) const = default;
};

/// True when the attack needs the client's honest local update.
bool needs_honest_update(AttackKind kind);

enum class ClientRole { kBenign, kMalicious };

struct ClientRecord {
  int id = 0;
  ClientRole role = ClientRole::kBenign;
  std::optional<AttackSpec> attack;  // present iff role == kMalicious
  ClientData data;
  MlpModel local_model;

  bool is_malicious() const { return role == ClientRole::kMalicious; }
};

/// m * 1 with a single m ~ N(0, tau^2).
FlatParams attack_same_value(const ArchSpec& arch, double tau, Rng& rng);
/// -|m| * honest with m ~ N(0, tau^2).
FlatParams attack_sign_flip(const FlatParams& honest, double tau, Rng& rng);
/// i.i.d. N(0, tau^2) entries.
FlatParams attack_gaussian(const ArchSpec& arch, double tau, Rng& rng);
/// -epsilon * mean(benign_uploads). Throws SimulationError if the list is empty.
FlatParams attack_ipm(std::span<const FlatParams> benign_uploads, double epsilon);

/// One round of client work starting from `global_params`.
///
/// Benign clients train a copy of the global model with SGD, store it as
/// their local model and upload it. Malicious clients train only when their
/// attack needs the honest update, then upload the attack vector; their data
/// and stored model are never touched by the attack. IPM clients need the
/// round's benign uploads in `benign_uploads`.
FlatParams local_update(ClientRecord& client, const FlatParams& global_params, const SgdConfig& cfg, Rng& rng,
                        std::span<const FlatParams> benign_uploads = {});

/// Picks exactly floor(fraction * n) malicious ids by seeded draw, ascending.
std::vector<int> draw_malicious_ids(std::size_t n, double malicious_fraction, Rng& rng);

}  // namespace fedaa
