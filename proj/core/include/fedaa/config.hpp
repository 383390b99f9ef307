#pragma once

// Experiment config files: flat `key = value` lines with dotted section
// prefixes, `#` comments. See docs/config.md for the full key list.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fedaa/orchestrator.hpp"

namespace fedaa {

/// Parses config text. Unknown keys, duplicates, bad values and constraint
/// violations raise ParseError carrying the 1-based line number (0 for
/// cross-key constraints).
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Canonical text: every key, fixed order, doubles with 17 significant
/// digits. parse_config_text(config_to_text(c)) == c.
std::string config_to_text(const ExperimentConfig& cfg);

/// Sets one key as if it appeared in a config file (used by sweeps).
void apply_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Names of all recognised keys, in canonical order.
std::vector<std::string> config_keys();

/// Hex SHA-256 of config_to_text(cfg).
std::string config_hash(const ExperimentConfig& cfg);

std::string sha256_hex(std::string_view data);

std::string to_string(AttackKind kind);
std::string to_string(Aggregator a);

}  // namespace fedaa
