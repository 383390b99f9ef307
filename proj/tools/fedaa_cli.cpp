// fedaa: run experiments, sweeps, reports and the invariant suite.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fedaa/config.hpp"
#include "fedaa/errors.hpp"
#include "fedaa/orchestrator.hpp"
#include "fedaa/results.hpp"
#include "fedaa/selftest.hpp"
#include "fedaa/svg.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace fedaa;

namespace {

struct CommonOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string format = "csv";
  bool plot = false;
};

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const IngestionError*>(&e)) return "ingestion";
  if (dynamic_cast<const SimulationError*>(&e)) return "simulation";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  return "internal";
}

// One JSON object per line so scripts can parse failures.
void report_error(const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
}

ExperimentConfig load(const CommonOpts& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : parse_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  return fs::path(dir);
}

int cmd_run(const CommonOpts& o, const std::string& checkpoint) {
  const ExperimentConfig cfg = load(o);
  const fs::path out = ensure_dir(o.out);
  const ResultFormat format = parse_result_format(o.format);

  RunManifest manifest;
  manifest.config_hash = config_hash(cfg);
  manifest.seeds = {cfg.seed};
  manifest.version = version_string();
  manifest.start_time = utc_timestamp();

  RunHooks hooks;
  hooks.on_round = [](const RoundRecord& r) {
    std::fprintf(stderr, "round %zu reward %.4f benign_acc %.4f\n", r.round, r.reward, r.mean_benign_acc);
  };
  if (!checkpoint.empty()) hooks.on_finish = [&](const DdpgAgent& a) { save_checkpoint(a, checkpoint); };

  const auto records = run(cfg, hooks);
  manifest.end_time = utc_timestamp();

  write_text_file(out / "config.txt", config_to_text(cfg));
  manifest.artifacts.push_back((out / "config.txt").string());
  const fs::path rounds = out / (format == ResultFormat::kCsv ? "rounds.csv" : "rounds.json");
  emit_results(records, rounds, format);
  manifest.artifacts.push_back(rounds.string());
  if (o.plot) {
    const fs::path csv = out / "rounds.csv";
    if (format != ResultFormat::kCsv) emit_results(records, csv, ResultFormat::kCsv);
    render_report(csv, out / "rounds.svg");
    manifest.artifacts.push_back((out / "rounds.svg").string());
  }
  if (!checkpoint.empty() && cfg.aggregator == Aggregator::kFedAA) manifest.artifacts.push_back(checkpoint);
  manifest.write(out / "manifest.json");
  std::printf("%s\n", rounds.string().c_str());
  return 0;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

GridAxis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("grid axis must be key=v1,v2,...: '" + spec + "'");
  GridAxis axis{spec.substr(0, eq), {}};
  std::string rest = spec.substr(eq + 1);
  // '|' separates values when they are lists themselves
  const char sep = rest.find('|') != std::string::npos ? '|' : ',';
  std::size_t start = 0;
  while (true) {
    const auto c = rest.find(sep, start);
    axis.values.push_back(rest.substr(start, c == std::string::npos ? std::string::npos : c - start));
    if (c == std::string::npos) break;
    start = c + 1;
  }
  return axis;
}

int cmd_sweep(const CommonOpts& o, const std::vector<std::string>& grid_specs, std::vector<std::uint64_t> seeds) {
  const ExperimentConfig base = load(o);
  const fs::path out = ensure_dir(o.out);
  const std::string start_time = utc_timestamp();
  if (seeds.empty()) seeds = {base.seed};

  std::vector<GridAxis> axes;
  for (const auto& g : grid_specs) axes.push_back(parse_axis(g));

  // Cartesian product, last axis fastest; each point expanded over seeds.
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.values.size();
  std::vector<std::vector<ExperimentConfig>> points;
  for (std::size_t p = 0; p < total; ++p) {
    ExperimentConfig cfg = base;
    std::size_t rem = p;
    for (std::size_t a = axes.size(); a-- > 0;) {
      apply_config_value(cfg, axes[a].key, axes[a].values[rem % axes[a].values.size()]);
      rem /= axes[a].values.size();
    }
    std::vector<ExperimentConfig> per_seed;
    for (auto s : seeds) {
      cfg.seed = s;
      cfg.validate();
      per_seed.push_back(cfg);
    }
    points.push_back(std::move(per_seed));
  }

  std::vector<const ExperimentConfig*> jobs;
  for (const auto& p : points) {
    for (const auto& c : p) jobs.push_back(&c);
  }
  std::vector<ResultRow> rows(jobs.size());
  std::vector<std::string> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min(threads_from_env(), jobs.size());
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        RunHooks hooks;
        hooks.threads = 1;
        const auto t0 = std::chrono::steady_clock::now();
        const auto records = run(*jobs[j], hooks);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows[j] = summarize_run(*jobs[j], records, secs);
        std::lock_guard lock(log_mu);
        std::fprintf(stderr, "sweep point %zu/%zu done (%.1fs)\n", j + 1, jobs.size(), secs);
      } catch (const std::exception& e) {
        failures[j] = error_kind(e) + ": " + e.what();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (!failures[j].empty()) throw SimulationError("sweep point " + std::to_string(j + 1) + ": " + failures[j]);
  }

  ResultTable table;
  std::size_t j = 0;
  for (const auto& p : points) {
    const std::size_t first = j;
    for (std::size_t k = 0; k < p.size(); ++k) table.rows.push_back(rows[j++]);
    if (p.size() > 1) table.rows.push_back(aggregate_rows(std::span(rows).subspan(first, p.size())));
  }
  const fs::path path = out / "table.csv";
  table.write(path);

  RunManifest manifest;
  manifest.config_hash = config_hash(base);
  manifest.seeds = seeds;
  manifest.version = version_string();
  manifest.artifacts = {path.string()};
  manifest.start_time = start_time;
  manifest.end_time = utc_timestamp();
  manifest.write(out / "manifest.json");
  std::printf("%s\n", path.string().c_str());
  return 0;
}

int cmd_report(const std::string& input, const std::string& out_dir) {
  const fs::path out = ensure_dir(out_dir);
  const fs::path svg = out / (fs::path(input).stem().string() + ".svg");
  render_report(input, svg);
  std::printf("%s\n", svg.string().c_str());
  return 0;
}

int cmd_selftest(std::uint64_t seed) {
  int failed = 0;
  for (const auto& r : run_selftest(seed)) {
    std::printf("%s %s%s%s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.empty() ? "" : ": ",
                r.detail.c_str());
    failed += r.passed ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}

void add_common(CLI::App* sub, CommonOpts& o, bool with_format) {
  sub->add_option("--config", o.config, "experiment config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "master seed (overrides the config)");
  sub->add_option("--out", o.out, "output directory");
  if (with_format) {
    sub->add_option("--format", o.format, "round record format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_flag("--plot", o.plot, "also write an SVG of the curves");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedAA federated learning simulator"};
  app.require_subcommand(1);

  CommonOpts run_opts, sweep_opts;
  std::string checkpoint;
  auto* run_cmd = app.add_subcommand("run", "run one experiment");
  add_common(run_cmd, run_opts, true);
  run_cmd->add_option("--checkpoint", checkpoint, "save the final agent here (fedaa only)");

  std::vector<std::string> grid;
  std::vector<std::uint64_t> seeds;
  auto* sweep_cmd = app.add_subcommand("sweep", "run a parameter grid into one result table");
  add_common(sweep_cmd, sweep_opts, false);
  sweep_cmd->add_option("--grid", grid, "axis as key=v1,v2,... or key=a,b|c,d for list values (repeatable)");
  sweep_cmd->add_option("--seeds", seeds, "seeds per grid point")->delimiter(',');

  std::string report_input, report_out = ".";
  auto* report_cmd = app.add_subcommand("report", "render a round-record CSV as SVG");
  report_cmd->add_option("csv", report_input, "round-record CSV")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report_out, "output directory");

  std::uint64_t selftest_seed = 1;
  auto* selftest_cmd = app.add_subcommand("selftest", "run the invariant suite");
  selftest_cmd->add_option("--seed", selftest_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_error("usage", e.what());
    return 2;
  }

  try {
    if (*run_cmd) return cmd_run(run_opts, checkpoint);
    if (*sweep_cmd) return cmd_sweep(sweep_opts, grid, seeds);
    if (*report_cmd) return cmd_report(report_input, report_out);
    if (*selftest_cmd) return cmd_selftest(selftest_seed);
  } catch (const std::exception& e) {
    report_error(error_kind(e), e.what());
    return dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ConfigError*>(&e) ? 2 : 1;
  }
  return 1;
}
