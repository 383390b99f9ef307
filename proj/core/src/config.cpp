#include "fedaa/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fedaa/errors.hpp"

namespace fedaa {

namespace {

// Thrown by value converters; turned into ParseError with the line number.
struct BadValue {
  std::string what;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(d)) throw BadValue{"expected a number, got '" + s + "'"};
  return d;
}

std::size_t to_size(std::string_view v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
    throw BadValue{"expected a non-negative integer, got '" + std::string(v) + "'"};
  }
  return out;
}

std::size_t to_positive(std::string_view v) {
  const std::size_t n = to_size(v);
  if (n == 0) throw BadValue{"expected a positive integer"};
  return n;
}

std::uint64_t to_u64(std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
    throw BadValue{"expected an unsigned integer, got '" + std::string(v) + "'"};
  }
  return out;
}

std::vector<std::size_t> to_size_list(std::string_view v) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "none") return out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? v.size() - start : comma - start));
    out.push_back(to_positive(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double in_range(double x, double lo, double hi, bool lo_open, bool hi_open, const char* what) {
  const bool ok = (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi);
  if (!ok) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s must be in %c%g, %g%c", what, lo_open ? '(' : '[', lo, hi, hi_open ? ')' : ']');
    throw BadValue{buf};
  }
  return x;
}

std::string fmt(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

AttackKind parse_attack(std::string_view v) {
  if (v == "same_value") return AttackKind::kSameValue;
  if (v == "sign_flip") return AttackKind::kSignFlip;
  if (v == "gaussian") return AttackKind::kGaussian;
  if (v == "ipm") return AttackKind::kIpm;
  throw BadValue{"unknown attack '" + std::string(v) + "'"};
}

struct Key {
  std::string name;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;  // empty string: omit
};

AttackSpec& need_attack(ExperimentConfig& c) {
  if (!c.attack) throw BadValue{"attack parameters given without an attack"};
  return *c.attack;
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto add = [&](std::string name, auto set, auto get) { k.push_back({std::move(name), set, get}); };

    add("dataset",
        [](ExperimentConfig& c, std::string_view v) {
          DatasetSpec& d = c.dataset;
          d.name = std::string(v);
          if (v == "synthetic00" || v == "synthetic") {
            d.kind = DatasetKind::kSynthetic;
            d.synthetic_alpha = d.synthetic_beta = 0.0;
          } else if (v == "synthetic11") {
            d.kind = DatasetKind::kSynthetic;
            d.synthetic_alpha = d.synthetic_beta = 1.0;
          } else if (v == "idx") {
            d.kind = DatasetKind::kIdx;
            c.validation.mode = ValidationMode::kPerClass;
          } else if (v == "csv") {
            d.kind = DatasetKind::kCsv;
            c.validation.mode = ValidationMode::kPerClass;
          } else {
            throw BadValue{"unknown dataset '" + std::string(v) + "'"};
          }
        },
        [](const ExperimentConfig& c) { return c.dataset.name; });
    add("dataset.synthetic_alpha",
        [](ExperimentConfig& c, std::string_view v) {
          c.dataset.synthetic_alpha = in_range(to_double(v), 0, 1e9, false, false, "dataset.synthetic_alpha");
        },
        [](const ExperimentConfig& c) { return fmt(c.dataset.synthetic_alpha); });
    add("dataset.synthetic_beta",
        [](ExperimentConfig& c, std::string_view v) {
          c.dataset.synthetic_beta = in_range(to_double(v), 0, 1e9, false, false, "dataset.synthetic_beta");
        },
        [](const ExperimentConfig& c) { return fmt(c.dataset.synthetic_beta); });
    add("dataset.size_log_mean", [](ExperimentConfig& c, std::string_view v) { c.dataset.size_log_mean = to_double(v); },
        [](const ExperimentConfig& c) { return fmt(c.dataset.size_log_mean); });
    add("dataset.size_log_sigma",
        [](ExperimentConfig& c, std::string_view v) {
          c.dataset.size_log_sigma = in_range(to_double(v), 0, 1e9, true, false, "dataset.size_log_sigma");
        },
        [](const ExperimentConfig& c) { return fmt(c.dataset.size_log_sigma); });
    add("dataset.size_min", [](ExperimentConfig& c, std::string_view v) { c.dataset.size_min = to_positive(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.size_min); });
    add("dataset.size_max", [](ExperimentConfig& c, std::string_view v) { c.dataset.size_max = to_positive(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.size_max); });
    add("dataset.partition",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "natural") c.dataset.partition = PartitionScheme::kNatural;
          else if (v == "dirichlet") c.dataset.partition = PartitionScheme::kDirichlet;
          else throw BadValue{"dataset.partition must be natural or dirichlet"};
        },
        [](const ExperimentConfig& c) {
          return std::string(c.dataset.partition == PartitionScheme::kNatural ? "natural" : "dirichlet");
        });
    add("dataset.dirichlet_concentration",
        [](ExperimentConfig& c, std::string_view v) {
          c.dataset.dirichlet_concentration = in_range(to_double(v), 0, 1e12, true, false, "dataset.dirichlet_concentration");
        },
        [](const ExperimentConfig& c) { return fmt(c.dataset.dirichlet_concentration); });
    add("dataset.images", [](ExperimentConfig& c, std::string_view v) { c.dataset.images_path = std::string(v); },
        [](const ExperimentConfig& c) { return c.dataset.images_path; });
    add("dataset.labels", [](ExperimentConfig& c, std::string_view v) { c.dataset.labels_path = std::string(v); },
        [](const ExperimentConfig& c) { return c.dataset.labels_path; });
    add("dataset.path", [](ExperimentConfig& c, std::string_view v) { c.dataset.csv_path = std::string(v); },
        [](const ExperimentConfig& c) { return c.dataset.csv_path; });
    add("model.hidden", [](ExperimentConfig& c, std::string_view v) { c.hidden_dims = to_size_list(v); },
        [](const ExperimentConfig& c) { return fmt_list(c.hidden_dims); });
    add("num_clients",
        [](ExperimentConfig& c, std::string_view v) {
          c.num_clients = to_size(v);
          if (c.num_clients < 2) throw BadValue{"num_clients must be at least 2"};
        },
        [](const ExperimentConfig& c) { return std::to_string(c.num_clients); });
    add("malicious_fraction",
        [](ExperimentConfig& c, std::string_view v) {
          c.malicious_fraction = in_range(to_double(v), 0.0, 0.5, false, true, "malicious_fraction");
        },
        [](const ExperimentConfig& c) { return fmt(c.malicious_fraction); });
    add("attack",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "none") c.attack.reset();
          else c.attack = AttackSpec::with_defaults(parse_attack(v));
        },
        [](const ExperimentConfig& c) { return c.attack ? to_string(c.attack->kind) : std::string("none"); });
    add("attack.tau",
        [](ExperimentConfig& c, std::string_view v) {
          need_attack(c).tau = in_range(to_double(v), 0, 1e12, false, false, "attack.tau");
        },
        [](const ExperimentConfig& c) { return c.attack ? fmt(c.attack->tau) : std::string(); });
    add("attack.ipm_epsilon",
        [](ExperimentConfig& c, std::string_view v) {
          need_attack(c).ipm_epsilon = in_range(to_double(v), 0, 1e12, false, false, "attack.ipm_epsilon");
        },
        [](const ExperimentConfig& c) { return c.attack ? fmt(c.attack->ipm_epsilon) : std::string(); });
    add("m_percent",
        [](ExperimentConfig& c, std::string_view v) {
          c.m_percent = in_range(to_double(v), 0, 100, true, false, "m_percent");
        },
        [](const ExperimentConfig& c) { return fmt(c.m_percent); });
    add("participation",
        [](ExperimentConfig& c, std::string_view v) {
          c.participation = in_range(to_double(v), 0, 1, true, false, "participation");
        },
        [](const ExperimentConfig& c) { return fmt(c.participation); });
    add("rounds", [](ExperimentConfig& c, std::string_view v) { c.rounds = to_positive(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.rounds); });
    add("aggregator",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "fedaa") c.aggregator = Aggregator::kFedAA;
          else if (v == "fedavg") c.aggregator = Aggregator::kFedAvg;
          else throw BadValue{"aggregator must be fedaa or fedavg"};
        },
        [](const ExperimentConfig& c) { return to_string(c.aggregator); });
    add("distance_scope",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "all_layers") c.distance_scope = DistanceScope::kAllLayers;
          else if (v == "last_hidden_layer") c.distance_scope = DistanceScope::kLastHiddenLayer;
          else throw BadValue{"distance_scope must be all_layers or last_hidden_layer"};
        },
        [](const ExperimentConfig& c) {
          return std::string(c.distance_scope == DistanceScope::kAllLayers ? "all_layers" : "last_hidden_layer");
        });
    add("seed", [](ExperimentConfig& c, std::string_view v) { c.seed = to_u64(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.seed); });

    add("local.lr",
        [](ExperimentConfig& c, std::string_view v) {
          c.local.learning_rate = in_range(to_double(v), 0, 1e6, false, false, "local.lr");
        },
        [](const ExperimentConfig& c) { return fmt(c.local.learning_rate); });
    add("local.weight_decay",
        [](ExperimentConfig& c, std::string_view v) {
          c.local.weight_decay = in_range(to_double(v), 0, 1e6, false, false, "local.weight_decay");
        },
        [](const ExperimentConfig& c) { return fmt(c.local.weight_decay); });
    add("local.batch_size", [](ExperimentConfig& c, std::string_view v) { c.local.batch_size = to_positive(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.local.batch_size); });
    add("local.epochs", [](ExperimentConfig& c, std::string_view v) { c.local.epochs = to_positive(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.local.epochs); });

    add("ddpg.gamma",
        [](ExperimentConfig& c, std::string_view v) { c.ddpg.gamma = in_range(to_double(v), 0, 1, false, false, "ddpg.gamma"); },
        [](const ExperimentConfig& c) { return fmt(c.ddpg.gamma); });
    add("ddpg.epsilon_soft",
        [](ExperimentConfig& c, std::string_view v) {
          c.ddpg.epsilon_soft = in_range(to_double(v), 0, 1, true, false, "ddpg.epsilon_soft");
        },
        [](const ExperimentConfig& c) { return fmt(c.ddpg.epsilon_soft); });
    add("ddpg.actor_lr",
        [](ExperimentConfig& c, std::string_view v) { c.ddpg.actor_lr = in_range(to_double(v), 0, 1e6, false, false, "ddpg.actor_lr"); },
        [](const ExperimentConfig& c) { return fmt(c.ddpg.actor_lr); });
    add("ddpg.critic_lr",
        [](ExperimentConfig& c, std::string_view v) { c.ddpg.critic_lr = in_range(to_double(v), 0, 1e6, false, false, "ddpg.critic_lr"); },
        [](const ExperimentConfig& c) { return fmt(c.ddpg.critic_lr); });
    add("ddpg.weight_decay",
        [](ExperimentConfig& c, std::string_view v) {
          c.ddpg.weight_decay = in_range(to_double(v), 0, 1e6, false, false, "ddpg.weight_decay");
        },
        [](const ExperimentConfig& c) { return fmt(c.ddpg.weight_decay); });
    add("ddpg.hidden", [](ExperimentConfig& c, std::string_view v) { c.ddpg.hidden = to_positive(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.ddpg.hidden); });
    add("ddpg.noise_sigma",
        [](ExperimentConfig& c, std::string_view v) {
          c.ddpg.noise_sigma = in_range(to_double(v), 0, 1e6, false, false, "ddpg.noise_sigma");
        },
        [](const ExperimentConfig& c) { return fmt(c.ddpg.noise_sigma); });
    add("ddpg.noise_sigma_final",
        [](ExperimentConfig& c, std::string_view v) {
          c.ddpg.noise_sigma_final = in_range(to_double(v), 0, 1e6, false, false, "ddpg.noise_sigma_final");
        },
        [](const ExperimentConfig& c) { return fmt(c.ddpg.noise_sigma_final); });
    add("ddpg.replay_capacity", [](ExperimentConfig& c, std::string_view v) { c.ddpg.replay_capacity = to_positive(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.ddpg.replay_capacity); });
    add("ddpg.batch_size", [](ExperimentConfig& c, std::string_view v) { c.ddpg.batch_size = to_positive(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.ddpg.batch_size); });
    add("ddpg.warmup", [](ExperimentConfig& c, std::string_view v) { c.ddpg.warmup = to_size(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.ddpg.warmup); });
    add("ddpg.target_update_every",
        [](ExperimentConfig& c, std::string_view v) { c.ddpg.target_update_every = to_positive(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.ddpg.target_update_every); });

    add("validation.mode",
        [](ExperimentConfig& c, std::string_view v) {
          if (v == "upload") c.validation.mode = ValidationMode::kUpload;
          else if (v == "per_class") c.validation.mode = ValidationMode::kPerClass;
          else throw BadValue{"validation.mode must be upload or per_class"};
        },
        [](const ExperimentConfig& c) {
          return std::string(c.validation.mode == ValidationMode::kUpload ? "upload" : "per_class");
        });
    add("validation.upload_fraction",
        [](ExperimentConfig& c, std::string_view v) {
          c.validation.upload_fraction = in_range(to_double(v), 0, 1, true, false, "validation.upload_fraction");
        },
        [](const ExperimentConfig& c) { return fmt(c.validation.upload_fraction); });
    add("validation.pool_per_class",
        [](ExperimentConfig& c, std::string_view v) { c.validation.pool_per_class = to_positive(v); },
        [](const ExperimentConfig& c) { return std::to_string(c.validation.pool_per_class); });
    add("validation.per_class",
        [](ExperimentConfig& c, std::string_view v) { c.validation.per_class_counts = to_size_list(v); },
        [](const ExperimentConfig& c) { return fmt_list(c.validation.per_class_counts); });
    return k;
  }();
  return table;
}

const Key* find_key(std::string_view name) {
  for (const auto& k : keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

// Keys whose setters reset dependent defaults are applied first.
int priority(std::string_view key) { return key == "dataset" || key == "attack" ? 0 : 1; }

}  // namespace

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kSameValue: return "same_value";
    case AttackKind::kSignFlip: return "sign_flip";
    case AttackKind::kGaussian: return "gaussian";
    case AttackKind::kIpm: return "ipm";
  }
  return "unknown";
}

std::string to_string(Aggregator a) { return a == Aggregator::kFedAA ? "fedaa" : "fedavg"; }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

void apply_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const Key* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + std::string(key) + "'");
  try {
    k->set(cfg, trim(value));
  } catch (const BadValue& e) {
    throw ConfigError(std::string(key) + ": " + e.what);
  }
}

ExperimentConfig parse_config_text(std::string_view text) {
  struct Entry {
    std::string key, value;
    int line;
  };
  std::vector<Entry> entries;
  std::map<std::string, int, std::less<>> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (!find_key(key)) throw ParseError("unknown key '" + key + "'", line_no);
    if (auto it = seen.find(key); it != seen.end()) {
      throw ParseError("duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")", line_no);
    }
    seen.emplace(key, line_no);
    entries.push_back({key, std::string(trim(line.substr(eq + 1))), line_no});
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return priority(a.key) < priority(b.key); });

  ExperimentConfig cfg;
  for (const auto& e : entries) {
    try {
      find_key(e.key)->set(cfg, e.value);
    } catch (const BadValue& bad) {
      throw ParseError(e.key + ": " + bad.what, e.line);
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& err) {
    throw ParseError(err.what(), 0);
  }
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) {
    const std::string v = k.get(cfg);
    if (v.empty() && k.name.rfind("attack.", 0) == 0) continue;
    out += k.name + " = " + v + "\n";
  }
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xF];
  }
  return hex;
}

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(config_to_text(cfg)); }

}  // namespace fedaa
