#include "scmpc/harness.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace scmpc;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> stability;
  std::optional<bool> first_step_only;

  void apply(ScenarioConfig& c) const {
    if (seed) c.seed = *seed;
    if (stability) c.mpc.stability_mode = stability_mode_from_string(*stability);
    if (first_step_only) c.mpc.first_step_only = *first_step_only;
    c.validate();
  }
};

// A directory contributes its *.json files (sorted); a file ending in .json
// is one config; any other file lists config paths, one per line, relative
// to the list.
std::vector<fs::path> expand_batch(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const std::string& a : args) {
    const fs::path p(a);
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else if (p.extension() == ".json") {
      out.push_back(p);
    } else {
      std::ifstream in(p);
      if (!in) throw ConfigError(p.string() + ": cannot open batch list", "");
      for (std::string line; std::getline(in, line);) {
        line.erase(0, line.find_first_not_of(" \t"));
        line.erase(line.find_last_not_of(" \t\r") + 1);
        if (line.empty() || line[0] == '#') continue;
        const fs::path entry(line);
        out.push_back(entry.is_absolute() ? entry : p.parent_path() / entry);
      }
    }
  }
  return out;
}

int report(const BatchResult& br, const std::vector<BatchEntry>& entries, const fs::path& out) {
  for (std::size_t i = 0; i < br.results.size(); ++i) {
    const Metrics& m = br.results[i].metrics;
    std::printf("%-28s %-10s %s", entries[i].config.name.c_str(), to_string(entries[i].config.mpc.stability_mode),
                m.success ? "success" : "FAIL");
    if (!m.success) std::printf(" (%s at tick %d)", m.failure_reason.c_str(), m.failure_tick);
    std::printf("  height err %.4f m  max|eta| %.4f  [%s]\n", m.height_error_mean, m.max_eta_norm,
                br.manifests[i].config_hash.c_str());
  }
  if (br.aggregate.size() < br.results.size()) {
    std::printf("\n%-20s %-10s %6s %8s %12s %12s\n", "group", "stability", "trials", "success", "h_err_mean",
                "h_err_std");
    for (const AggregateRow& r : br.aggregate)
      std::printf("%-20s %-10s %6d %7.0f%% %12.4f %12.4f\n", r.group.c_str(), r.stability.c_str(), r.trials,
                  100.0 * r.success_rate, r.height_error_mean, r.height_error_std);
  }
  std::printf("outputs in %s\n", out.string().c_str());
  return br.all_succeeded() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability-constrained centroidal MPC simulator"};
  app.require_subcommand(1);

  const char* env_out = std::getenv(kOutDirEnv);
  std::string out_dir = env_out && *env_out ? env_out : "out";
  int parallel = 1;
  std::uint64_t seed = 0;
  std::string stability, first_step;
  app.add_option("--out", out_dir, std::string("Output directory (default: $") + kOutDirEnv + " or ./out)");
  auto* seed_opt = app.add_option("--seed", seed, "Override the scenario seed");
  app.add_option("--parallel", parallel, "Worker threads for batches")->check(CLI::PositiveNumber);
  auto* stab_opt = app.add_option("--stability", stability, "Override the stability constraint")
                       ->check(CLI::IsMember({"on", "off", "norm-bound"}));
  auto* fso_opt = app.add_option("--first-step-only", first_step, "Apply the eta constraint at the first knot only")
                      ->check(CLI::IsMember({"true", "false"}));

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one scenario file");
  run->add_option("config", config_path, "Scenario JSON")->required();

  std::vector<std::string> batch_args;
  auto* batch = app.add_subcommand("batch", "Run every scenario in a directory or list file");
  batch->add_option("inputs", batch_args, "Directory, JSON file or list file")->required();

  std::string preset_name;
  auto* pre = app.add_subcommand("preset", "Run a built-in preset");
  std::string names;
  for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
  pre->add_option("name", preset_name, "One of: " + names)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    Overrides ov;
    if (*seed_opt) ov.seed = seed;
    if (*stab_opt) ov.stability = stability;
    if (*fso_opt) ov.first_step_only = first_step == "true";

    std::vector<BatchEntry> entries;
    if (*run) {
      entries.push_back({parse_config(config_path), {}});
    } else if (*batch) {
      for (const fs::path& p : expand_batch(batch_args)) entries.push_back({parse_config(p), {}});
    } else {
      entries = preset_batch(preset_name, seed);
    }
    for (BatchEntry& e : entries) ov.apply(e.config);

    const fs::path out(out_dir);
    const BatchResult br = run_batch(entries, parallel, out);
    return report(br, entries, out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
