#include "scmpc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace scmpc {
namespace {

using nlohmann::json;

// Reads one JSON object, checking types and rejecting keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected object", prefix_);
  }

  std::string key(const std::string& k) const { return prefix_.empty() ? k : prefix_ + "." + k; }

  const json* find(const std::string& k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& k) {
    const json* v = find(k);
    if (!v) throw ConfigError(key(k) + ": required key missing (expected number)", key(k));
    return *v;
  }

  void number(const std::string& k, double& out, bool required = false) {
    const json* v = required ? &require(k) : find(k);
    if (!v) return;
    if (!v->is_number()) fail(k, "number");
    out = v->get<double>();
  }

  // null stands for +infinity (JSON has no literal for it).
  void number_or_inf(const std::string& k, double& out) {
    const json* v = find(k);
    if (!v) return;
    if (v->is_null()) {
      out = std::numeric_limits<double>::infinity();
      return;
    }
    if (!v->is_number()) fail(k, "number or null");
    out = v->get<double>();
  }

  void integer(const std::string& k, int& out) {
    const json* v = find(k);
    if (!v) return;
    if (!v->is_number_integer()) fail(k, "integer");
    out = v->get<int>();
  }

  void uint64(const std::string& k, std::uint64_t& out) {
    const json* v = find(k);
    if (!v) return;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
      fail(k, "non-negative integer");
    out = v->get<std::uint64_t>();
  }

  void boolean(const std::string& k, bool& out) {
    const json* v = find(k);
    if (!v) return;
    if (!v->is_boolean()) fail(k, "boolean");
    out = v->get<bool>();
  }

  void string(const std::string& k, std::string& out) {
    const json* v = find(k);
    if (!v) return;
    if (!v->is_string()) fail(k, "string");
    out = v->get<std::string>();
  }

  void vec3(const std::string& k, Vec3& out) {
    const json* v = find(k);
    if (!v) return;
    out = to_vec3(*v, key(k));
  }

  static Vec3 to_vec3(const json& v, const std::string& full_key) {
    if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); }))
      throw ConfigError(full_key + ": expected array of 3 numbers", full_key);
    return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(key(it.key()) + ": unknown key", key(it.key()));
  }

 private:
  [[noreturn]] void fail(const std::string& k, const char* type) const {
    throw ConfigError(key(k) + ": expected " + type, key(k));
  }
  std::string where() const { return prefix_.empty() ? "config" : prefix_; }

  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json inf_or_number(double x) { return std::isinf(x) && x > 0 ? json(nullptr) : json(x); }

const char* kind_name(DisturbanceKind k) {
  switch (k) {
    case DisturbanceKind::constant: return "constant";
    case DisturbanceKind::impulse: return "impulse";
    case DisturbanceKind::step_change: return "step_change";
  }
  return "constant";
}

DisturbanceKind kind_from(const std::string& s, const std::string& key) {
  if (s == "constant") return DisturbanceKind::constant;
  if (s == "impulse") return DisturbanceKind::impulse;
  if (s == "step_change") return DisturbanceKind::step_change;
  throw ConfigError(key + ": expected one of constant, impulse, step_change", key);
}

void read_model(const json& j, ModelParams& m) {
  ObjectReader r(j, "model");
  r.number("mass", m.mass, true);
  r.number("gravity", m.gravity);
  r.integer("n_feet", m.n_feet);
  if (const json* c = r.find("corner_offsets")) {
    if (!c->is_array() || c->empty()) throw ConfigError("model.corner_offsets: expected array of [x,y,z]", "model.corner_offsets");
    m.corner_offsets.clear();
    for (const json& e : *c) m.corner_offsets.push_back(ObjectReader::to_vec3(e, "model.corner_offsets"));
  }
  r.finish();
}

void read_gait(const json& j, GaitParams& g) {
  ObjectReader r(j, "gait");
  r.number("step_length", g.step_length);
  r.number("step_width", g.step_width);
  r.number("step_duration", g.step_duration);
  r.number("double_support_fraction", g.double_support_fraction);
  r.integer("n_steps", g.n_steps);
  r.number("com_height", g.com_height);
  r.number("walk_speed_scale", g.walk_speed_scale);
  r.number("initial_stance", g.initial_stance);
  r.number("final_stance", g.final_stance);
  r.number("swing_height", g.swing_height);
  r.finish();
}

void read_mpc(const json& j, MPCConfig& m) {
  ObjectReader r(j, "mpc");
  r.integer("horizon", m.horizon);
  r.number("dt", m.dt);
  r.vec3("weight_com", m.weight_com);
  r.vec3("weight_eta", m.weight_eta);
  r.vec3("weight_contact", m.weight_contact);
  r.number("weight_force_symmetry", m.weight_force_symmetry);
  r.number("force_rate_ratio", m.force_rate_ratio);
  r.number("weight_swing_velocity", m.weight_swing_velocity);
  if (const json* g = r.find("gains")) {
    ObjectReader gr(*g, "mpc.gains");
    gr.vec3("k1", m.gains.k1);
    gr.vec3("k2", m.gains.k2);
    gr.number("adapt_gain", m.gains.adapt_gain);
    gr.finish();
  }
  r.number("eta_bound", m.eta_bound);
  r.number("eta_slack", m.eta_slack);
  std::string mode = to_string(m.stability_mode);
  r.string("stability", mode);
  m.stability_mode = stability_mode_from_string(mode);
  r.boolean("first_step_only", m.first_step_only);
  r.number("friction", m.friction);
  r.number("fz_min", m.fz_min);
  r.vec3("contact_lower", m.contact_lower);
  r.vec3("contact_upper", m.contact_upper);
  r.number("nu_bound", m.nu_bound);
  r.number("eps_stab", m.eps_stab);
  r.number("swing_velocity_bound", m.swing_velocity_bound);
  if (const json* s = r.find("solver")) {
    ObjectReader sr(*s, "mpc.solver");
    sr.number("tol_kkt", m.solver.tol_kkt);
    sr.integer("max_iter", m.solver.max_iter);
    sr.number("regularization", m.solver.regularization);
    sr.finish();
  }
  r.finish();
}

void read_sim(const json& j, ScenarioConfig& c) {
  ObjectReader r(j, "sim");
  r.number("duration", c.duration);
  r.uint64("seed", c.seed);
  r.integer("substeps", c.substeps);
  if (const json* t = r.find("thresholds")) {
    ObjectReader tr(*t, "sim.thresholds");
    tr.number("z1_max", c.thresholds.z1_max);
    tr.number("height_max", c.thresholds.height_max);
    tr.number("eta_max", c.thresholds.eta_max);
    tr.finish();
  }
  r.finish();
}

void read_disturbances(const json& j, std::vector<DisturbanceSpec>& out) {
  if (!j.is_array()) throw ConfigError("disturbances: expected array of objects", "disturbances");
  out.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    ObjectReader r(j[i], "disturbances[" + std::to_string(i) + "]");
    DisturbanceSpec d;
    r.vec3("force", d.force);
    r.vec3("lever_arm", d.lever_arm);
    r.number("t_start", d.t_start);
    r.number_or_inf("t_end", d.t_end);
    std::string kind = kind_name(d.kind);
    r.string("kind", kind);
    d.kind = kind_from(kind, r.key("kind"));
    r.finish();
    out.push_back(d);
  }
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Platform-independent uniform draw in [0, 1).
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

ScenarioConfig fig2_base(const std::string& name, int horizon, double dt, StabilityMode mode) {
  ScenarioConfig c;
  c.name = name;
  c.gait.com_height = 0.53;
  c.gait.n_steps = 10;
  c.mpc.horizon = horizon;
  c.mpc.dt = dt;
  c.mpc.stability_mode = mode;
  return c;
}

// Constant downward force equivalent to carrying `kg` on the reference robot,
// scaled to the model mass.
DisturbanceSpec payload(double kg, const ModelParams& m) {
  DisturbanceSpec d;
  d.force = Vec3(0.0, 0.0, kg * m.gravity * (m.mass / 56.7));
  d.t_start = 0.0;
  d.t_end = std::numeric_limits<double>::infinity();
  return d;
}

std::string mode_suffix(StabilityMode m) { return std::string("-") + to_string(m); }

}  // namespace

ScenarioConfig config_from_json(const json& j) {
  ObjectReader r(j, "");
  const json* ver = r.find("schema_version");
  if (!ver) throw ConfigError("schema_version: required key missing (expected integer)", "schema_version");
  if (!ver->is_number_integer()) throw ConfigError("schema_version: expected integer", "schema_version");
  if (ver->get<int>() != kSchemaVersion)
    throw ConfigError("schema_version: unsupported version " + ver->dump() + " (expected " +
                          std::to_string(kSchemaVersion) + ")",
                      "schema_version");
  ScenarioConfig c;
  r.string("name", c.name);
  const json* model = r.find("model");
  if (!model) throw ConfigError("model.mass: required key missing (expected number)", "model.mass");
  read_model(*model, c.model);
  if (const json* g = r.find("gait")) read_gait(*g, c.gait);
  if (const json* m = r.find("mpc")) read_mpc(*m, c.mpc);
  if (const json* s = r.find("sim")) read_sim(*s, c);
  if (const json* d = r.find("disturbances")) read_disturbances(*d, c.disturbances);
  r.finish();
  c.validate();
  return c;
}

ScenarioConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open file", "");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what(), "");
  }
  return config_from_json(j);
}

json config_to_json(const ScenarioConfig& c) {
  json corners = json::array();
  for (const Vec3& o : c.model.corner_offsets) corners.push_back(vec3_json(o));
  json dist = json::array();
  for (const DisturbanceSpec& d : c.disturbances)
    dist.push_back({{"force", vec3_json(d.force)},
                    {"lever_arm", vec3_json(d.lever_arm)},
                    {"t_start", d.t_start},
                    {"t_end", inf_or_number(d.t_end)},
                    {"kind", kind_name(d.kind)}});
  const MPCConfig& m = c.mpc;
  return {
      {"schema_version", kSchemaVersion},
      {"name", c.name},
      {"model",
       {{"mass", c.model.mass}, {"gravity", c.model.gravity}, {"n_feet", c.model.n_feet}, {"corner_offsets", corners}}},
      {"gait",
       {{"step_length", c.gait.step_length},
        {"step_width", c.gait.step_width},
        {"step_duration", c.gait.step_duration},
        {"double_support_fraction", c.gait.double_support_fraction},
        {"n_steps", c.gait.n_steps},
        {"com_height", c.gait.com_height},
        {"walk_speed_scale", c.gait.walk_speed_scale},
        {"initial_stance", c.gait.initial_stance},
        {"final_stance", c.gait.final_stance},
        {"swing_height", c.gait.swing_height}}},
      {"mpc",
       {{"horizon", m.horizon},
        {"dt", m.dt},
        {"weight_com", vec3_json(m.weight_com)},
        {"weight_eta", vec3_json(m.weight_eta)},
        {"weight_contact", vec3_json(m.weight_contact)},
        {"weight_force_symmetry", m.weight_force_symmetry},
        {"force_rate_ratio", m.force_rate_ratio},
        {"weight_swing_velocity", m.weight_swing_velocity},
        {"gains", {{"k1", vec3_json(m.gains.k1)}, {"k2", vec3_json(m.gains.k2)}, {"adapt_gain", m.gains.adapt_gain}}},
        {"eta_bound", m.eta_bound},
        {"eta_slack", m.eta_slack},
        {"stability", to_string(m.stability_mode)},
        {"first_step_only", m.first_step_only},
        {"friction", m.friction},
        {"fz_min", m.fz_min},
        {"contact_lower", vec3_json(m.contact_lower)},
        {"contact_upper", vec3_json(m.contact_upper)},
        {"nu_bound", m.nu_bound},
        {"eps_stab", m.eps_stab},
        {"swing_velocity_bound", m.swing_velocity_bound},
        {"solver",
         {{"tol_kkt", m.solver.tol_kkt}, {"max_iter", m.solver.max_iter}, {"regularization", m.solver.regularization}}}}},
      {"sim",
       {{"duration", c.duration},
        {"seed", c.seed},
        {"substeps", c.substeps},
        {"thresholds",
         {{"z1_max", c.thresholds.z1_max},
          {"height_max", c.thresholds.height_max},
          {"eta_max", c.thresholds.eta_max}}}}},
      {"disturbances", dist},
  };
}

std::string config_hash(const ScenarioConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config_to_json(cfg).dump())));
  return buf;
}

std::vector<std::string> preset_names() {
  return {"fig2-left", "fig2-center", "fig2-right", "fig2-ablation", "payload", "payload-push", "push", "table1"};
}

std::vector<ScenarioConfig> preset(const std::string& name, std::uint64_t seed) {
  const StabilityMode on = StabilityMode::full_contraction, off = StabilityMode::off;
  std::vector<ScenarioConfig> out;
  if (name == "fig2-left") {
    out.push_back(fig2_base(name, 12, 0.1, on));
  } else if (name == "fig2-center") {
    out.push_back(fig2_base(name, 10, 0.1, on));
  } else if (name == "fig2-right") {
    out.push_back(fig2_base(name, 12, 0.2, on));
  } else if (name == "fig2-ablation") {
    for (const auto& [n, np, dt] : {std::tuple{"fig2-left", 12, 0.1}, {"fig2-center", 10, 0.1}, {"fig2-right", 12, 0.2}})
      for (StabilityMode m : {off, on}) out.push_back(fig2_base(n + mode_suffix(m), np, dt, m));
  } else if (name == "payload") {
    for (double kg : {10.0, 15.0}) {
      ScenarioConfig c = fig2_base("payload-" + std::to_string(static_cast<int>(kg)), 12, 0.1, on);
      c.disturbances = {payload(kg, c.model)};
      out.push_back(c);
    }
  } else if (name == "payload-push") {
    ScenarioConfig c = fig2_base(name, 12, 0.1, on);
    DisturbanceSpec push;
    push.force = Vec3(0.0, 60.0, 0.0);
    push.lever_arm = Vec3(0.0, 0.0, 0.2);
    push.t_start = 3.0;
    push.t_end = 3.2;
    push.kind = DisturbanceKind::impulse;
    c.disturbances = {payload(10.0, c.model), push};
    out.push_back(c);
  } else if (name == "push") {
    // Constant 100 N at the CoM while standing.
    ScenarioConfig c = fig2_base(name, 12, 0.1, on);
    c.gait.step_length = 0.0;
    c.gait.n_steps = 2;
    c.duration = 10.0;
    DisturbanceSpec d;
    d.force = Vec3(60.0, -80.0, 0.0);
    d.t_start = 0.0;
    d.t_end = std::numeric_limits<double>::infinity();
    c.disturbances = {d};
    out.push_back(c);
  } else if (name == "table1") {
    // 20 trials per load with a seeded walking speed in [0.1, 0.3] m/s.
    std::mt19937_64 rng(seed);
    std::vector<double> speeds(20);
    for (double& v : speeds) v = 0.1 + 0.2 * unit_draw(rng);
    for (double kg : {0.0, 10.0, 15.0})
      for (StabilityMode m : {off, on})
        for (std::size_t i = 0; i < speeds.size(); ++i) {
          ScenarioConfig c = fig2_base("table1-load" + std::to_string(static_cast<int>(kg)) + mode_suffix(m) + "-" +
                                           std::to_string(i),
                                       12, 0.1, m);
          c.gait.n_steps = 6;
          c.gait.step_length = speeds[i] * c.gait.step_duration;
          if (kg > 0.0) c.disturbances = {payload(kg, c.model)};
          c.seed = seed + i;
          out.push_back(c);
        }
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")", "preset");
  }
  for (ScenarioConfig& c : out) {
    if (name != "table1") c.seed = seed;
    c.validate();
  }
  return out;
}

std::vector<BatchEntry> preset_batch(const std::string& name, std::uint64_t seed) {
  std::vector<BatchEntry> out;
  for (ScenarioConfig& c : preset(name, seed)) {
    std::string g = c.name;
    const auto dash = g.find_last_of('-');
    if (dash != std::string::npos && dash + 1 < g.size() &&
        std::all_of(g.begin() + dash + 1, g.end(), [](char ch) { return ch >= '0' && ch <= '9'; }) &&
        g.compare(0, 6, "table1") == 0)
      g.erase(dash);
    for (StabilityMode m : {StabilityMode::off, StabilityMode::full_contraction, StabilityMode::norm_bound}) {
      const std::string suf = mode_suffix(m);
      if (g.size() > suf.size() && g.compare(g.size() - suf.size(), suf.size(), suf) == 0) {
        g.erase(g.size() - suf.size());
        break;
      }
    }
    out.push_back({std::move(c), std::move(g)});
  }
  return out;
}

bool BatchResult::all_succeeded() const {
  return std::all_of(results.begin(), results.end(), [](const SimResult& r) { return r.metrics.success; });
}

std::vector<AggregateRow> aggregate(const std::vector<BatchEntry>& entries, const std::vector<SimResult>& results) {
  if (entries.size() != results.size()) throw ContractViolation("aggregate: entries and results differ in size");
  std::map<std::pair<std::string, std::string>, AggregateRow> rows;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string group = entries[i].group.empty() ? entries[i].config.name : entries[i].group;
    const std::string mode = to_string(entries[i].config.mpc.stability_mode);
    AggregateRow& row = rows[{group, mode}];
    row.group = group;
    row.stability = mode;
    const Metrics& m = results[i].metrics;
    ++row.trials;
    row.successes += m.success ? 1 : 0;
    row.height_error_mean += m.height_error_mean;
    row.height_error_std += m.height_error_std;
    row.max_eta_norm = std::max(row.max_eta_norm, m.max_eta_norm);
  }
  std::vector<AggregateRow> out;
  for (auto& [key, row] : rows) {
    row.success_rate = static_cast<double>(row.successes) / row.trials;
    row.height_error_mean /= row.trials;
    row.height_error_std /= row.trials;
    out.push_back(row);
  }
  return out;
}

BatchResult run_batch(const std::vector<BatchEntry>& entries, int parallelism, const std::filesystem::path& out_dir) {
  if (parallelism < 1) throw ConfigError("parallelism must be at least 1", "parallel");
  BatchResult br;
  br.results.resize(entries.size());
  br.manifests.resize(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < entries.size();) {
      const ScenarioConfig& cfg = entries[i].config;
      const auto t0 = std::chrono::steady_clock::now();
      SimResult r;
      try {
        r = run_scenario(cfg);
      } catch (const std::exception& e) {
        r.name = cfg.name;
        r.dt = cfg.mpc.dt;
        r.metrics.success = false;
        r.metrics.failure_reason = std::string("error: ") + e.what();
      }
      RunManifest man;
      man.scenario = cfg.name;
      man.config_hash = config_hash(cfg);
      if (!out_dir.empty()) {
        char idx[16];
        std::snprintf(idx, sizeof idx, "%03zu_", i);
        emit_outputs(cfg, r, out_dir / (idx + cfg.name), &man);
      }
      man.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      br.results[i] = std::move(r);
      br.manifests[i] = std::move(man);
    }
  };
  const int n = std::min<int>(parallelism, std::max<std::size_t>(entries.size(), 1));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  br.aggregate = aggregate(entries, br.results);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_aggregate_csv(br.aggregate, out_dir / "aggregate.csv");
  }
  return br;
}

std::vector<std::string> trace_csv_header(int n_corners) {
  std::vector<std::string> h = {"t"};
  auto xyz = [&h](const std::string& n) {
    for (const char* a : {"_x", "_y", "_z"}) h.push_back(n + a);
  };
  xyz("p_com");
  xyz("p_ref");
  for (int i = 0; i < 6; ++i) h.push_back("h" + std::to_string(i));
  for (const char* n : {"z1", "z2", "eta", "theta_hat", "nu"}) xyz(n);
  for (int c = 0; c < n_corners; ++c) xyz("f" + std::to_string(c));
  for (const char* n : {"stab_residual", "eta_norm", "solve_iters", "solve_ms", "status"}) h.push_back(n);
  return h;
}

json summary_json(const ScenarioConfig& cfg, const SimResult& r, const RunManifest& man) {
  const Metrics& m = r.metrics;
  std::map<std::string, int> status_counts;
  for (const TraceRow& row : r.trace) ++status_counts[to_string(row.status)];
  return {{"schema_version", kSchemaVersion},
          {"manifest",
           {{"scenario", man.scenario},
            {"config_hash", man.config_hash},
            {"code_version", man.code_version},
            {"outputs", man.outputs},
            {"wall_s", man.wall_s},
            {"solve_ms_mean", man.solve_ms_mean},
            {"solve_ms_max", man.solve_ms_max}}},
          {"config", config_to_json(cfg)},
          {"metrics",
           {{"success", m.success},
            {"failure_tick", m.failure_tick},
            {"failure_reason", m.failure_reason},
            {"height_error_mean", m.height_error_mean},
            {"height_error_std", m.height_error_std},
            {"max_z1", m.max_z1},
            {"max_eta_norm", m.max_eta_norm},
            {"max_contact_deviation", m.max_contact_deviation},
            {"ticks", r.trace.size()},
            {"diverged", r.diverged},
            {"infeasible", r.infeasible}}},
          {"status_counts", status_counts}};
}

std::vector<std::string> emit_outputs(const ScenarioConfig& cfg, const SimResult& r, const std::filesystem::path& dir,
                                      RunManifest* manifest) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error(dir.string() + ": " + ec.message());
  auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error(p.string() + ": cannot open for writing");
    return f;
  };
  const int nc = cfg.model.n_corners();
  const std::vector<std::string> header = trace_csv_header(nc);

  const auto csv_path = dir / "trace.csv";
  {
    std::ofstream f = open(csv_path);
    for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
    f << '\n';
    for (const TraceRow& row : r.trace) {
      std::vector<double> v = {row.t};
      auto put = [&v](const auto& x) {
        for (int i = 0; i < x.size(); ++i) v.push_back(x(i));
      };
      put(row.p_com);
      put(row.p_ref);
      put(row.h);
      put(row.z1);
      put(row.z2);
      put(row.eta);
      put(row.theta_hat);
      put(row.nu);
      for (int c = 0; c < nc; ++c) put(c < static_cast<int>(row.forces.size()) ? row.forces[c] : Vec3::Zero().eval());
      v.push_back(row.stab_residual);
      v.push_back(row.eta_norm);
      for (double x : v) f << fmt(x) << ',';
      f << row.solve_iters << ',' << fmt(row.solve_ms) << ',' << to_string(row.status) << '\n';
    }
    if (!f) throw std::runtime_error(csv_path.string() + ": write failed");
  }

  const auto gp_path = dir / "plots.gp";
  {
    std::ofstream f = open(gp_path);
    f << "# gnuplot -c plots.gp  (writes plots.png next to trace.csv)\n"
         "set datafile separator ','\n"
         "set terminal pngcairo size 1400,1000\n"
         "set output 'plots.png'\n"
         "set key autotitle columnhead\n"
         "set multiplot layout 2,2 title '"
      << cfg.name << " (stability " << to_string(cfg.mpc.stability_mode) << ")'\n"
      << "set xlabel 't [s]'\n"
         "set title 'CoM tracking'; set ylabel 'm'\n"
         "plot 'trace.csv' using 't':'p_com_x' with lines, '' using 't':'p_ref_x' with lines dt 2, "
         "'' using 't':'p_com_y' with lines, '' using 't':'p_ref_y' with lines dt 2, "
         "'' using 't':'p_com_z' with lines, '' using 't':'p_ref_z' with lines dt 2\n"
         "set title 'angular momentum norm'; set ylabel 'm^2/s'\n"
         "plot 'trace.csv' using 't':'eta_norm' with lines, "
      << fmt(cfg.mpc.eta_bound)
      << " title 'bound' dt 2\n"
         "set title 'stabilizing term nu'; set ylabel 'm/s^2'\n"
         "plot 'trace.csv' using 't':'nu_x' with lines, '' using 't':'nu_y' with lines, '' using 't':'nu_z' with lines\n"
         "set title 'stability residual'; set ylabel ''\n"
         "plot 'trace.csv' using 't':'stab_residual' with lines\n"
         "unset multiplot\n";
  }

  RunManifest local;
  RunManifest& man = manifest ? *manifest : local;
  if (man.scenario.empty()) man.scenario = cfg.name;
  if (man.config_hash.empty()) man.config_hash = config_hash(cfg);
  const auto summary_path = dir / "summary.json";
  man.outputs = {csv_path.string(), summary_path.string(), gp_path.string()};
  double sum = 0.0, mx = 0.0;
  int n = 0;
  for (const TraceRow& row : r.trace)
    if (row.status != TickStatus::none) {
      sum += row.solve_ms;
      mx = std::max(mx, row.solve_ms);
      ++n;
    }
  man.solve_ms_mean = n ? sum / n : 0.0;
  man.solve_ms_max = mx;
  {
    std::ofstream f = open(summary_path);
    f << summary_json(cfg, r, man).dump(2) << '\n';
    if (!f) throw std::runtime_error(summary_path.string() + ": write failed");
  }
  return man.outputs;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error(path.string() + ": cannot open for writing");
  f << "group,stability,trials,successes,success_rate,height_error_mean,height_error_std,max_eta_norm\n";
  for (const AggregateRow& r : rows)
    f << r.group << ',' << r.stability << ',' << r.trials << ',' << r.successes << ',' << fmt(r.success_rate) << ','
      << fmt(r.height_error_mean) << ',' << fmt(r.height_error_std) << ',' << fmt(r.max_eta_norm) << '\n';
}

}  // namespace scmpc
