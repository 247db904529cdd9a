#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fedspace/sim.hpp"

namespace fedspace::sim {
namespace {

using nlohmann::json;

// Reads members of one JSON object and rejects any it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config: " + where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config: " + where(key) + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw std::invalid_argument("config: unknown key '" + where(key) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_constellation(const json& j, orbits::ConstellationSpec& c) {
  ObjectReader r(j, "trace.constellation");
  r.get("planes", c.planes);
  r.get("sats_per_plane", c.sats_per_plane);
  std::vector<double> alt_km;
  for (double a : c.altitudes_m) alt_km.push_back(a / 1000.0);
  r.get("altitudes_km", alt_km);
  c.altitudes_m.clear();
  for (double a : alt_km) c.altitudes_m.push_back(a * 1000.0);
  r.get("inclinations_deg", c.inclinations_deg);
  double spread_deg = orbits::rad2deg(c.raan_spread_rad);
  r.get("raan_spread_deg", spread_deg);
  c.raan_spread_rad = orbits::deg2rad(spread_deg);
  r.get("phasing", c.phasing);
  r.finish();
}

void read_trace(const json& j, TraceConfig& t) {
  ObjectReader r(j, "trace");
  r.get("file", t.file);
  r.get("zone_visits_file", t.zone_visits_file);
  if (const auto* c = r.child("constellation")) read_constellation(*c, t.constellation);
  double alpha_deg = orbits::rad2deg(t.connectivity.alpha_min_rad);
  r.get("min_elevation_deg", alpha_deg);
  t.connectivity.alpha_min_rad = orbits::deg2rad(alpha_deg);
  r.get("t0_seconds", t.connectivity.t0_seconds);
  r.get("horizon", t.connectivity.horizon);
  r.get("substep_seconds", t.connectivity.substep_seconds);
  r.finish();
}

void read_task(const json& j, TaskConfig& t) {
  ObjectReader r(j, "task");
  r.get("dim", t.dim);
  r.get("classes", t.classes);
  r.get("separation", t.separation);
  r.get("zones", t.zones);
  r.get("zone_concentration", t.zone_concentration);
  r.get("anisotropy", t.anisotropy);
  r.get("train_samples", t.train_samples);
  r.get("validation_samples", t.validation_samples);
  r.get("probe_samples", t.probe_samples);
  r.get("source_samples", t.source_samples);
  r.get("l2", t.l2);
  r.get("partition", t.partition);
  r.get("seed", t.seed);
  r.finish();
}

void read_fedspace(const json& j, sched::FedSpaceConfig& f) {
  ObjectReader r(j, "scheduler.fedspace");
  r.get("horizon", f.horizon);
  r.get("n_min", f.n_min);
  r.get("n_max", f.n_max);
  r.get("trials", f.trials);
  r.get("s_max", f.s_max);
  r.get("status_decay", f.status_decay);
  r.finish();
}

void read_scheduler(const json& j, SchedulerConfig& s) {
  ObjectReader r(j, "scheduler");
  r.get("kind", s.kind);
  r.get("buffer_size", s.buffer_size);
  if (const auto* f = r.child("fedspace")) read_fedspace(*f, s.fedspace);
  r.get("regressor", s.regressor);
  r.get("infer_band", s.infer_band);
  r.finish();
}

void read_forest(const json& j, forest::ForestParams& f) {
  ObjectReader r(j, "utility.forest");
  r.get("trees", f.trees);
  r.get("max_depth", f.max_depth);
  r.get("min_samples_leaf", f.min_samples_leaf);
  r.get("max_features", f.max_features);
  r.get("bootstrap", f.bootstrap);
  r.finish();
}

void read_local(const json& j, fl::LocalTrainConfig& l, const char* path = "local") {
  ObjectReader r(j, path);
  r.get("steps", l.steps);
  r.get("batch", l.batch);
  r.get("lr", l.lr);
  r.finish();
}

void read_utility(const json& j, UtilityFitConfig& u, const fl::LocalTrainConfig& base) {
  ObjectReader r(j, "utility");
  r.get("samples", u.samples);
  r.get("pretrain_rounds", u.pretrain_rounds);
  r.get("draw", u.draw);
  if (const auto* f = r.child("forest")) read_forest(*f, u.forest);
  r.get("holdout_fraction", u.holdout_fraction);
  if (const auto* l = r.child("local")) read_local(*l, u.local.emplace(base), "utility.local");
  r.finish();
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

}  // namespace

void TraceConfig::validate() const {
  if (file.empty()) {
    constellation.validate();
    if (connectivity.horizon < 1) throw std::invalid_argument("config: trace.horizon must be >= 1");
    if (!(connectivity.t0_seconds > 0.0)) throw std::invalid_argument("config: trace.t0_seconds must be positive");
    if (!(connectivity.substep_seconds > 0.0))
      throw std::invalid_argument("config: trace.substep_seconds must be positive");
    if (!(connectivity.alpha_min_rad >= 0.0 && connectivity.alpha_min_rad < orbits::kPi / 2))
      throw std::invalid_argument("config: trace.min_elevation_deg must be in [0, 90)");
  }
}

void TaskConfig::validate() const {
  if (dim < 1 || classes < 2) throw std::invalid_argument("config: task needs dim >= 1 and classes >= 2");
  if (zones < 1) throw std::invalid_argument("config: task.zones must be >= 1");
  if (!(separation >= 0.0)) throw std::invalid_argument("config: task.separation must be >= 0");
  if (!(zone_concentration > 0.0)) throw std::invalid_argument("config: task.zone_concentration must be positive");
  if (!(anisotropy >= 1.0)) throw std::invalid_argument("config: task.anisotropy must be >= 1");
  if (train_samples < classes || validation_samples < 1 || probe_samples < 1 || source_samples < classes)
    throw std::invalid_argument("config: task sample counts too small");
  if (!(l2 >= 0.0)) throw std::invalid_argument("config: task.l2 must be >= 0");
  if (partition != "iid" && partition != "noniid")
    throw std::invalid_argument("config: task.partition must be 'iid' or 'noniid'");
}

void SchedulerConfig::validate() const {
  if (kind == "fedbuff") {
    if (buffer_size < 1) throw std::invalid_argument("config: scheduler.buffer_size must be >= 1");
  } else if (kind == "fedspace") {
    fedspace.validate();
  } else if (kind != "sync" && kind != "async") {
    throw std::invalid_argument("config: scheduler.kind must be sync, async, fedbuff or fedspace");
  }
}

std::string SchedulerConfig::label() const {
  if (kind == "fedbuff") return "fedbuff-M" + std::to_string(buffer_size);
  return kind;
}

void UtilityFitConfig::validate() const {
  if (samples < 20) throw std::invalid_argument("config: utility.samples must be >= 20");
  if (pretrain_rounds < 1) throw std::invalid_argument("config: utility.pretrain_rounds must be >= 1");
  if (draw != "uniform" && draw != "participation")
    throw std::invalid_argument("config: utility.draw must be 'uniform' or 'participation'");
  if (forest.trees < 1 || forest.max_depth < 0 || forest.min_samples_leaf < 1 || forest.max_features < 0)
    throw std::invalid_argument("config: invalid utility.forest parameters");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw std::invalid_argument("config: utility.holdout_fraction must be in (0, 1)");
  if (local) local->validate();
}

void SimConfig::validate() const {
  trace.validate();
  task.validate();
  scheduler.validate();
  utility.validate();
  local.validate();
  if (scheduler.kind == "fedspace" && utility.pretrain_rounds <= scheduler.fedspace.s_max)
    throw std::invalid_argument("config: utility.pretrain_rounds must exceed scheduler.fedspace.s_max");
  if (!(alpha >= 0.0)) throw std::invalid_argument("config: alpha must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("config: eval_every must be >= 1");
  if (!(target_accuracy >= 0.0 && target_accuracy < 1.0))
    throw std::invalid_argument("config: target_accuracy must be in [0, 1)");
  if (!(max_days >= 0.0)) throw std::invalid_argument("config: max_days must be >= 0");
}

std::int64_t SimConfig::max_indices(const orbits::ConnectivitySets& trace) const {
  if (max_days <= 0.0) return static_cast<std::int64_t>(trace.horizon());
  return static_cast<std::int64_t>(std::ceil(max_days * 86400.0 / trace.t0_seconds));
}

SimConfig config_from_json(const json& j) {
  SimConfig c;
  ObjectReader r(j, "");
  if (const auto* t = r.child("trace")) read_trace(*t, c.trace);
  if (const auto* t = r.child("task")) read_task(*t, c.task);
  if (const auto* s = r.child("scheduler")) read_scheduler(*s, c.scheduler);
  if (const auto* l = r.child("local")) read_local(*l, c.local);
  if (const auto* u = r.child("utility")) read_utility(*u, c.utility, c.local);
  r.get("alpha", c.alpha);
  r.get("eval_every", c.eval_every);
  r.get("target_accuracy", c.target_accuracy);
  r.get("stop_at_target", c.stop_at_target);
  r.get("max_days", c.max_days);
  r.get("seed", c.seed);
  r.finish();
  c.scheduler.fedspace.alpha = c.alpha;
  c.validate();
  return c;
}

json config_to_json(const SimConfig& c) {
  json alt = json::array();
  for (double a : c.trace.constellation.altitudes_m) alt.push_back(a / 1000.0);
  const auto& f = c.scheduler.fedspace;
  const auto& fp = c.utility.forest;
  json out = {
      {"trace",
       {{"file", c.trace.file},
        {"zone_visits_file", c.trace.zone_visits_file},
        {"constellation",
         {{"planes", c.trace.constellation.planes},
          {"sats_per_plane", c.trace.constellation.sats_per_plane},
          {"altitudes_km", alt},
          {"inclinations_deg", c.trace.constellation.inclinations_deg},
          {"raan_spread_deg", orbits::rad2deg(c.trace.constellation.raan_spread_rad)},
          {"phasing", c.trace.constellation.phasing}}},
        {"min_elevation_deg", orbits::rad2deg(c.trace.connectivity.alpha_min_rad)},
        {"t0_seconds", c.trace.connectivity.t0_seconds},
        {"horizon", c.trace.connectivity.horizon},
        {"substep_seconds", c.trace.connectivity.substep_seconds}}},
      {"task",
       {{"dim", c.task.dim},
        {"classes", c.task.classes},
        {"separation", c.task.separation},
        {"zones", c.task.zones},
        {"zone_concentration", c.task.zone_concentration},
        {"anisotropy", c.task.anisotropy},
        {"train_samples", c.task.train_samples},
        {"validation_samples", c.task.validation_samples},
        {"probe_samples", c.task.probe_samples},
        {"source_samples", c.task.source_samples},
        {"l2", c.task.l2},
        {"partition", c.task.partition},
        {"seed", c.task.seed}}},
      {"scheduler",
       {{"kind", c.scheduler.kind},
        {"buffer_size", c.scheduler.buffer_size},
        {"fedspace",
         {{"horizon", f.horizon},
          {"n_min", f.n_min},
          {"n_max", f.n_max},
          {"trials", f.trials},
          {"s_max", f.s_max},
          {"status_decay", f.status_decay}}},
        {"regressor", c.scheduler.regressor},
        {"infer_band", c.scheduler.infer_band}}},
      {"utility",
       {{"samples", c.utility.samples},
        {"pretrain_rounds", c.utility.pretrain_rounds},
        {"draw", c.utility.draw},
        {"forest",
         {{"trees", fp.trees},
          {"max_depth", fp.max_depth},
          {"min_samples_leaf", fp.min_samples_leaf},
          {"max_features", fp.max_features},
          {"bootstrap", fp.bootstrap}}},
        {"holdout_fraction", c.utility.holdout_fraction}}},
      {"local", {{"steps", c.local.steps}, {"batch", c.local.batch}, {"lr", c.local.lr}}},
      {"alpha", c.alpha},
      {"eval_every", c.eval_every},
      {"target_accuracy", c.target_accuracy},
      {"stop_at_target", c.stop_at_target},
      {"max_days", c.max_days},
      {"seed", c.seed},
  };
  if (const auto& l = c.utility.local) out["utility"]["local"] = {{"steps", l->steps}, {"batch", l->batch}, {"lr", l->lr}};
  return out;
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override '" + assignment + "' is not of the form path=value");
  const std::string path = assignment.substr(0, eq);
  json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw std::invalid_argument("override '" + assignment + "' has an empty path segment");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw std::invalid_argument("override '" + assignment + "': path crosses a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw std::invalid_argument("override '" + assignment + "': path crosses a non-object");
  (*node)[parts.back()] = parse_value(assignment.substr(eq + 1));
}

}  // namespace fedspace::sim
