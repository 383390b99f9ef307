#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedaa {

using Rng = std::mt19937_64;

/// One step of the splitmix64 generator. Used to fan a master seed out into
/// independent subsystem seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// derive_seed(s, {a, b, ...}) = splitmix64(...splitmix64(splitmix64(s) ^ a) ^ b ...)
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (auto t : tags) h = splitmix64(h ^ t);
  return h;
}

/// Subsystem tags for derive_seed.
enum class SeedStream : std::uint64_t {
  kData = 1,
  kModelInit = 2,
  kRoles = 3,
  kClients = 4,
  kAgent = 5,
  kParticipation = 6,
  kExploration = 7,
  kAttack = 8,
  kReplay = 9,
};

inline Rng make_rng(std::uint64_t master, SeedStream stream,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(master, {static_cast<std::uint64_t>(stream), a, b}));
}

}  // namespace fedaa
