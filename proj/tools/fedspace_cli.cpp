// Command-line front end: gen-trace, fit-utility, run, sweep, report.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedspace/contact_trace.hpp"
#include "fedspace/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fedspace;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

json load_doc(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError("config " + path + ": " + e.what());
    }
  }
  for (const auto& o : overrides) sim::apply_override(doc, o);
  return doc;
}

void write_stats(const orbits::ConnectivitySets& trace, const fs::path& dir) {
  const auto stats = orbits::connectivity_stats(trace);
  std::ofstream per_index(dir / "trace_per_index.csv", std::ios::binary);
  per_index << "time_index,hours,connected\n";
  for (std::size_t i = 0; i < stats.per_index.size(); ++i)
    per_index << i << ',' << fmt(static_cast<double>(i) * trace.t0_seconds / 3600.0) << ',' << stats.per_index[i]
              << '\n';
  std::ofstream per_sat(dir / "trace_per_satellite.csv", std::ios::binary);
  per_sat << "satellite_id,visits\n";
  for (std::size_t k = 0; k < stats.per_satellite.size(); ++k) per_sat << k << ',' << stats.per_satellite[k] << '\n';
}

int cmd_gen_trace(const std::string& config_path, const std::vector<std::string>& sets, const fs::path& out) {
  const auto cfg = sim::config_from_json(load_doc(config_path, sets));
  if (!cfg.trace.file.empty()) throw UsageError("gen-trace generates a trace; remove trace.file from the config");
  const auto constellation = orbits::walker_constellation(cfg.trace.constellation);
  const auto stations = orbits::reference_stations();
  const auto trace = orbits::compute_connectivity(constellation, stations, cfg.trace.connectivity);
  fs::create_directories(out);
  orbits::save_contact_trace(trace, out / "trace.csv");
  write_stats(trace, out);

  const auto visits = orbits::latitude_band_visits(
      constellation, cfg.task.zones, static_cast<double>(trace.horizon()) * trace.t0_seconds);
  std::ofstream zv(out / "zone_visits.csv", std::ios::binary);
  zv << "satellite_id,zone,visits\n";
  for (std::size_t k = 0; k < visits.size(); ++k)
    for (std::size_t z = 0; z < visits[k].size(); ++z) zv << k << ',' << z << ',' << visits[k][z] << '\n';

  const auto stats = orbits::connectivity_stats(trace);
  const auto [lo, hi] = std::minmax_element(stats.per_index.begin(), stats.per_index.end());
  std::cout << "trace: " << trace.horizon() << " indices, " << trace.num_satellites << " satellites, |C_i| in ["
            << *lo << ", " << *hi << "]\n"
            << "wrote " << (out / "trace.csv").string() << '\n';
  return 0;
}

int cmd_fit_utility(const std::string& config_path, const std::vector<std::string>& sets, const fs::path& out) {
  const auto cfg = sim::config_from_json(load_doc(config_path, sets));
  const auto env = sim::prepare_environment(cfg);
  const auto report = sim::fit_utility(cfg, env);
  fs::create_directories(out);
  report.regressor.save(out / "regressor.json");
  utility::save_samples_csv(report.samples, report.regressor.s_max(), out / "utility_samples.csv");
  const auto& r = report.regressor;
  if (r.target_variance() == 0.0)
    std::cerr << "warning: every sample has the same delta_f; the regressor is a constant predictor\n";
  std::cout << "samples: " << r.sample_count() << "\nholdout mse: " << fmt(r.holdout_mse())
            << "\nholdout target variance: " << fmt(r.holdout_variance())
            << "\nmean delta_f, all fresh: " << fmt(report.mean_fresh_delta_f)
            << "\nmean delta_f, all at s_max: " << fmt(report.mean_stale_delta_f) << "\nwrote "
            << (out / "regressor.json").string() << '\n';
  return 0;
}

int cmd_run(const std::string& config_path, std::vector<std::string> sets, const fs::path& out) {
  const auto cfg = sim::config_from_json(load_doc(config_path, sets));
  const auto m = sim::run(cfg);
  sim::write_metrics(m, out);
  std::cout << m.scheduler << " seed " << m.seed << ": " << m.global_updates << " updates, final accuracy "
            << fmt(m.curve.back().accuracy);
  if (cfg.target_accuracy > 0.0)
    std::cout << ", time to target " << (m.time_to_target_days ? fixed2(*m.time_to_target_days) + " days" : "-");
  std::cout << "\nwrote " << (out / (sim::metrics_file_stem(m) + ".json")).string() << '\n';
  return 0;
}

// "label:path=value,path=value"
sim::GridPoint parse_grid_point(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0) throw UsageError("grid point '" + text + "' must be label:path=value,...");
  sim::GridPoint g{text.substr(0, colon), {}};
  std::stringstream ss(text.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item.find('=') == std::string::npos) throw UsageError("grid override '" + item + "' lacks '='");
    g.overrides.push_back(item);
  }
  return g;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& sets, const fs::path& out,
              const std::vector<std::string>& grid_text, std::vector<std::uint64_t> seeds, int reps,
              std::uint64_t master_seed, int threads) {
  const auto base = sim::config_from_json(load_doc(config_path, sets));
  std::vector<sim::GridPoint> grid;
  for (const auto& g : grid_text) grid.push_back(parse_grid_point(g));
  if (grid.empty()) grid.push_back({base.scheduler.label(), {}});
  if (seeds.empty()) {
    if (reps < 1) throw UsageError("--reps must be >= 1");
    for (int r = 0; r < reps; ++r) seeds.push_back(derive_seed(master_seed, {static_cast<std::uint64_t>(r)}));
  }
  const auto results = sim::sweep(base, grid, seeds, threads);
  for (const auto& [key, m] : results) {
    sim::write_metrics(m, out / key.first);
    std::cout << key.first << " seed " << key.second << ": time to target "
              << (m.time_to_target_days ? fixed2(*m.time_to_target_days) : std::string("-")) << '\n';
  }
  return 0;
}

struct ReportRow {
  std::vector<double> days;  // +inf when the target was not reached
  std::map<int, std::int64_t> staleness;
  std::int64_t idle = 0, contacts = 0, updates = 0;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  if (std::isinf(a) || std::isinf(b)) return std::isinf(a) ? a : b;
  return 0.5 * (a + b);
}

int cmd_report(const fs::path& dir, const std::string& baseline, double target, const fs::path& out) {
  if (!fs::is_directory(dir)) throw UsageError("report: " + dir.string() + " is not a directory");
  std::map<std::string, ReportRow> rows;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  const double inf = std::numeric_limits<double>::infinity();
  for (const auto& f : files) {
    std::ifstream in(f);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error&) {
      continue;
    }
    if (!j.is_object() || !j.contains("summary") || !j.contains("curve") || !j.contains("scheduler")) continue;
    auto& row = rows[j.at("scheduler").get<std::string>()];
    const auto& s = j.at("summary");
    const double t0 = s.at("t0_seconds").get<double>();
    const double tgt = target > 0.0 ? target : s.at("target_accuracy").get<double>();
    double days = inf;
    for (const auto& p : j.at("curve"))
      if (p.at("accuracy").get<double>() >= tgt) {
        days = p.at("time_index").get<double>() * t0 / 86400.0;
        break;
      }
    row.days.push_back(days);
    for (const auto& [k, v] : j.at("staleness_histogram").items()) row.staleness[std::stoi(k)] += v.get<std::int64_t>();
    row.idle += s.at("idle_contacts").get<std::int64_t>();
    row.contacts += s.at("total_contacts").get<std::int64_t>();
    row.updates += s.at("global_updates").get<std::int64_t>();
  }
  if (rows.empty()) throw UsageError("report: no metrics files under " + dir.string());

  std::optional<double> base_days;
  if (!baseline.empty()) {
    const auto it = rows.find(baseline);
    if (it == rows.end()) throw UsageError("report: baseline '" + baseline + "' has no runs");
    base_days = median(it->second.days);
  }

  fs::create_directories(out);
  std::ofstream summary(out / "summary.csv", std::ios::binary);
  summary << "scheduler,runs,median_days,gain,idle_fraction,global_updates\n";
  std::printf("%-16s %5s %12s %8s %8s\n", "scheduler", "runs", "days", "gain", "idle");
  for (const auto& [name, row] : rows) {
    const double d = median(row.days);
    const std::string days = std::isinf(d) ? "-" : fixed2(d);
    std::string gain = "-";
    if (base_days && !std::isinf(*base_days) && !std::isinf(d) && d > 0.0) gain = fixed2(*base_days / d);
    const double idle = row.contacts ? static_cast<double>(row.idle) / static_cast<double>(row.contacts) : 0.0;
    std::printf("%-16s %5zu %12s %8s %8s\n", name.c_str(), row.days.size(), days.c_str(), gain.c_str(),
                fixed2(idle).c_str());
    summary << name << ',' << row.days.size() << ',' << days << ',' << gain << ',' << fmt(idle) << ','
            << row.updates << '\n';
  }

  std::ofstream hist(out / "staleness_histogram.csv", std::ios::binary);
  hist << "scheduler,staleness,count\n";
  for (const auto& [name, row] : rows)
    for (const auto& [s, n] : row.staleness) hist << name << ',' << s << ',' << n << '\n';
  std::ofstream idle(out / "idleness.csv", std::ios::binary);
  idle << "scheduler,idle_contacts,total_contacts\n";
  for (const auto& [name, row] : rows) idle << name << ',' << row.idle << ',' << row.contacts << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Satellite federated learning simulator and aggregation scheduler"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string out = "out";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("--set", sets, "Override a config value, e.g. --set scheduler.buffer_size=16");
    sub->add_option("-o,--out", out, "Output directory")->capture_default_str();
  };

  auto* gen = app.add_subcommand("gen-trace", "Compute the connectivity trace of the configured constellation");
  add_common(gen);

  auto* fit = app.add_subcommand("fit-utility", "Fit the aggregation-utility regressor on a source task");
  add_common(fit);

  auto* runc = app.add_subcommand("run", "Run one simulation");
  add_common(runc);
  std::string scheduler, regressor;
  int buffer_size = 0;
  std::optional<std::uint64_t> seed;
  runc->add_option("--scheduler", scheduler, "sync | async | fedbuff | fedspace")
      ->check(CLI::IsMember({"sync", "async", "fedbuff", "fedspace"}));
  runc->add_option("--m", buffer_size, "FedBuff buffer size M")->check(CLI::PositiveNumber);
  runc->add_option("--regressor", regressor, "Utility regressor artifact (fedspace)");
  runc->add_option("--seed", seed, "Run seed");

  auto* sw = app.add_subcommand("sweep", "Run a grid of configurations over several seeds");
  add_common(sw);
  std::vector<std::string> grid;
  std::vector<std::uint64_t> seeds;
  int reps = 3, threads = 1;
  std::uint64_t master_seed = 0;
  sw->add_option("--grid", grid, "Grid point label:path=value,... (repeatable)");
  sw->add_option("--seeds", seeds, "Explicit run seeds")->delimiter(',');
  sw->add_option("--reps", reps, "Seeds per grid point when --seeds is absent")->capture_default_str();
  sw->add_option("--master-seed", master_seed, "Master seed for derived run seeds")->capture_default_str();
  sw->add_option("-j,--threads", threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  auto* rep = app.add_subcommand("report", "Summarize metrics files: time to target, gains, histograms");
  std::string metrics_dir, baseline = "sync";
  double target = 0.0;
  rep->add_option("dir", metrics_dir, "Directory with metrics JSON files")->required();
  rep->add_option("--baseline", baseline, "Scheduler label the gains are relative to")->capture_default_str();
  rep->add_option("--target", target, "Target accuracy (default: the one recorded in each run)");
  rep->add_option("-o,--out", out, "Output directory for report CSVs")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_trace(config_path, sets, out);
    if (*fit) return cmd_fit_utility(config_path, sets, out);
    if (*runc) {
      if (!scheduler.empty()) sets.push_back("scheduler.kind=\"" + scheduler + "\"");
      if (buffer_size > 0) sets.push_back("scheduler.buffer_size=" + std::to_string(buffer_size));
      if (!regressor.empty()) sets.push_back("scheduler.regressor=" + json(regressor).dump());
      if (seed) sets.push_back("seed=" + std::to_string(*seed));
      return cmd_run(config_path, sets, out);
    }
    if (*sw) return cmd_sweep(config_path, sets, out, grid, seeds, reps, master_seed, threads);
    if (*rep) return cmd_report(metrics_dir, baseline, target, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
