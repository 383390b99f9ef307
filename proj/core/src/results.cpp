#include "fedaa/results.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "fedaa/config.hpp"
#include "fedaa/errors.hpp"
#include "json.hpp"

namespace fedaa {

namespace {

constexpr const char* kRoundHeader =
    "round,reward,mean_benign_acc,acc_std,acc_var,loss_std,global_mean_acc,global_acc_std,"
    "selected_ids,action,per_class_val_acc";

constexpr const char* kTableHeader =
    "method,dataset,attack,malicious_pct,m_pct,c_pct,seed,mean_acc,acc_std,acc_var,global_acc,"
    "runtime_seconds,row_kind";

void check_finite(const RoundRecord& r) {
  auto check = [&](double x, const char* field) {
    if (!std::isfinite(x)) {
      throw NumericError("non-finite " + std::string(field) + " in round " + std::to_string(r.round));
    }
  };
  check(r.reward, "reward");
  check(r.mean_benign_acc, "mean_benign_acc");
  check(r.acc_std, "acc_std");
  check(r.acc_var, "acc_var");
  check(r.loss_std, "loss_std");
  check(r.global_mean_acc, "global_mean_acc");
  check(r.global_acc_std, "global_acc_std");
  for (double a : r.action) check(a, "action");
  for (double a : r.per_class_val_acc) check(a, "per_class_val_acc");
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, const char* sep, F f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += f(v[i]);
  }
  return s;
}

std::string num_list(const std::vector<double>& v, const char* sep) {
  return join(v, sep, [](double x) { return format_number(x); });
}

std::string id_list(const std::vector<int>& v, const char* sep) {
  return join(v, sep, [](int x) { return std::to_string(x); });
}

}  // namespace

ResultFormat parse_result_format(const std::string& s) {
  if (s == "csv") return ResultFormat::kCsv;
  if (s == "json") return ResultFormat::kJson;
  throw ConfigError("format must be csv or json, got '" + s + "'");
}

std::string format_number(double x) {
  if (!std::isfinite(x)) throw NumericError("cannot emit non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string records_to_csv(std::span<const RoundRecord> records) {
  std::string out = std::string(kRoundHeader) + "\n";
  for (const auto& r : records) {
    check_finite(r);
    out += std::to_string(r.round) + "," + format_number(r.reward) + "," + format_number(r.mean_benign_acc) + "," +
           format_number(r.acc_std) + "," + format_number(r.acc_var) + "," + format_number(r.loss_std) + "," +
           format_number(r.global_mean_acc) + "," + format_number(r.global_acc_std) + "," +
           id_list(r.selected_ids, ";") + "," + num_list(r.action, ";") + "," + num_list(r.per_class_val_acc, ";") +
           "\n";
  }
  return out;
}

std::string records_to_json(std::span<const RoundRecord> records) {
  std::string out = "[";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    check_finite(r);
    out += i ? ",\n " : "\n ";
    out += "{\"round\": " + std::to_string(r.round) + ", \"reward\": " + format_number(r.reward) +
           ", \"mean_benign_acc\": " + format_number(r.mean_benign_acc) + ", \"acc_std\": " + format_number(r.acc_std) +
           ", \"acc_var\": " + format_number(r.acc_var) + ", \"loss_std\": " + format_number(r.loss_std) +
           ", \"global_mean_acc\": " + format_number(r.global_mean_acc) +
           ", \"global_acc_std\": " + format_number(r.global_acc_std) + ", \"selected_ids\": [" +
           id_list(r.selected_ids, ", ") + "], \"action\": [" + num_list(r.action, ", ") +
           "], \"per_class_val_acc\": [" + num_list(r.per_class_val_acc, ", ") + "]}";
  }
  out += records.empty() ? "]\n" : "\n]\n";
  return out;
}

std::vector<RoundRecord> records_from_json(const std::string& text) {
  std::vector<RoundRecord> out;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (!doc.is_array()) throw ConfigError("round records: expected a JSON array");
    for (const auto& j : doc) {
      RoundRecord r;
      r.round = j.at("round").get<std::size_t>();
      r.reward = j.at("reward").get<double>();
      r.mean_benign_acc = j.at("mean_benign_acc").get<double>();
      r.acc_std = j.at("acc_std").get<double>();
      r.acc_var = j.at("acc_var").get<double>();
      r.loss_std = j.at("loss_std").get<double>();
      r.global_mean_acc = j.at("global_mean_acc").get<double>();
      r.global_acc_std = j.at("global_acc_std").get<double>();
      r.selected_ids = j.at("selected_ids").get<std::vector<int>>();
      r.action = j.at("action").get<std::vector<double>>();
      r.per_class_val_acc = j.at("per_class_val_acc").get<std::vector<double>>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("round records: ") + e.what());
  }
  return out;
}

void emit_results(std::span<const RoundRecord> records, const std::filesystem::path& path, ResultFormat format) {
  // Format first so a NaN never leaves a half-written file behind.
  const std::string text = format == ResultFormat::kCsv ? records_to_csv(records) : records_to_json(records);
  write_text_file(path, text);
}

ResultRow summarize_run(const ExperimentConfig& cfg, std::span<const RoundRecord> records, double runtime_seconds) {
  if (records.empty()) throw SimulationError("no rounds to summarise");
  const RoundRecord& last = records.back();
  ResultRow row;
  row.method = to_string(cfg.aggregator);
  row.dataset = cfg.dataset.name;
  row.attack = cfg.attack ? to_string(cfg.attack->kind) : "none";
  row.malicious_pct = 100.0 * cfg.malicious_fraction;
  row.m_pct = cfg.m_percent;
  row.c_pct = 100.0 * cfg.participation;
  row.seed = cfg.seed;
  row.mean_acc = last.mean_benign_acc;
  row.acc_std = last.acc_std;
  row.acc_var = last.acc_var;
  row.global_acc = last.global_mean_acc;
  row.runtime_seconds = runtime_seconds;
  return row;
}

ResultRow aggregate_rows(std::span<const ResultRow> rows) {
  if (rows.empty()) throw ConfigError("cannot aggregate zero rows");
  ResultRow out = rows.front();
  out.seed = 0;
  out.aggregate = true;
  out.mean_acc = out.acc_std = out.acc_var = out.global_acc = out.runtime_seconds = 0.0;
  for (const auto& r : rows) {
    out.mean_acc += r.mean_acc;
    out.acc_std += r.acc_std;
    out.acc_var += r.acc_var;
    out.global_acc += r.global_acc;
    out.runtime_seconds += r.runtime_seconds;
  }
  const double n = static_cast<double>(rows.size());
  out.mean_acc /= n;
  out.acc_std /= n;
  out.acc_var /= n;
  out.global_acc /= n;
  out.runtime_seconds /= n;
  return out;
}

std::string ResultTable::to_csv() const {
  std::string out = std::string(kTableHeader) + "\n";
  for (const auto& r : rows) {
    out += r.method + "," + r.dataset + "," + r.attack + "," + format_number(r.malicious_pct) + "," +
           format_number(r.m_pct) + "," + format_number(r.c_pct) + "," + std::to_string(r.seed) + "," +
           format_number(r.mean_acc) + "," + format_number(r.acc_std) + "," + format_number(r.acc_var) + "," +
           format_number(r.global_acc) + "," + format_number(r.runtime_seconds) + "," +
           (r.aggregate ? "mean" : "run") + "\n";
  }
  return out;
}

void ResultTable::write(const std::filesystem::path& path) const { write_text_file(path, to_csv()); }

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash;
  j["seeds"] = seeds;
  j["start_time"] = start_time;
  j["end_time"] = end_time;
  j["artifacts"] = artifacts;
  j["version"] = version;
  return j.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& path) const { write_text_file(path, to_json()); }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string version_string() { return "fedaa " FEDAA_VERSION; }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fedaa
