#pragma once

#include "scmpc/simulator.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace scmpc {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kCodeVersion = "1.0.0";
/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "SCMPC_OUT_DIR";

/// Parsed scenario file; every field not present keeps its documented default.
ScenarioConfig parse_config(const std::filesystem::path& path);
ScenarioConfig config_from_json(const nlohmann::json& j);
/// Complete configuration, defaults included; config_from_json inverts it.
nlohmann::json config_to_json(const ScenarioConfig& cfg);

/// FNV-1a 64 of the canonical (sorted-key, shortest round-trip) JSON dump.
std::string config_hash(const ScenarioConfig& cfg);


std::vector<std::string> preset_names();

struct RunManifest {
  std::string scenario;
  std::string config_hash;
  std::string code_version = kCodeVersion;
  std::vector<std::string> outputs;
  double wall_s = 0.0;
  double solve_ms_mean = 0.0;
  double solve_ms_max = 0.0;
};

/// One aggregate row: runs sharing a group label and stability mode.
struct AggregateRow {
  std::string group;
  std::string stability;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double height_error_mean = 0.0;  // mean over trials of the per-run mean
  double height_error_std = 0.0;   // mean over trials of the per-run std
  double max_eta_norm = 0.0;
};

struct BatchEntry {
  ScenarioConfig config;
  /// Aggregation key; defaults to the scenario name.
  std::string group;
};

/// Throws ConfigError for an unknown name. `seed` drives randomized presets.
std::vector<ScenarioConfig> preset(const std::string& name, std::uint64_t seed = 0);
/// The preset as batch entries grouped for aggregation: the stability suffix
/// and trial index are dropped from the run name.
std::vector<BatchEntry> preset_batch(const std::string& name, std::uint64_t seed = 0);

struct BatchResult {
  std::vector<SimResult> results;  // in input order
  std::vector<RunManifest> manifests;
  std::vector<AggregateRow> aggregate;  // sorted by (group, stability)
  bool all_succeeded() const;
};

/// Runs scenarios on `parallelism` workers. When `out_dir` is non-empty each
/// run writes to out_dir/<index>_<name>/ and the aggregate to
/// out_dir/aggregate.csv. A run that throws is recorded as a failure.
BatchResult run_batch(const std::vector<BatchEntry>& entries, int parallelism,
                      const std::filesystem::path& out_dir = {});

std::vector<AggregateRow> aggregate(const std::vector<BatchEntry>& entries,
                                    const std::vector<SimResult>& results);

std::vector<std::string> trace_csv_header(int n_corners);
/// Writes trace.csv, summary.json, plots.gp; returns the written paths.
std::vector<std::string> emit_outputs(const ScenarioConfig& cfg, const SimResult& result,
                                      const std::filesystem::path& dir, RunManifest* manifest = nullptr);

nlohmann::json summary_json(const ScenarioConfig& cfg, const SimResult& result, const RunManifest& manifest);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path);

}  // namespace scmpc
