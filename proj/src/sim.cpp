#include "fedspace/sim.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fedspace/contact_trace.hpp"

namespace fedspace::sim {
namespace {

using nlohmann::json;

// Stream ids for seeds derived from the task seed and from the run seed.
enum TaskStream : std::uint64_t { kTaskDef = 1, kTrain, kValidation, kProbe, kSource, kSourcePartition, kSampler,
                                  kSamples, kForestFit };
enum RunStream : std::uint64_t { kPartition = 1, kTraining, kSearch };

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::unique_ptr<fl::Scheduler> make_scheduler(const SimConfig& config, const Environment& env,
                                              std::shared_ptr<const utility::UtilityModel> regressor) {
  const auto& s = config.scheduler;
  if (s.kind == "sync") return std::make_unique<sched::SyncScheduler>();
  if (s.kind == "async") return std::make_unique<sched::AsyncScheduler>();
  if (s.kind == "fedbuff") return std::make_unique<sched::FedBuffScheduler>(s.buffer_size);
  if (!regressor)
    throw std::invalid_argument(
        "fedspace needs a fitted utility regressor: run `fedspace_cli fit-utility` and set scheduler.regressor "
        "to the artifact path");
  auto fs = s.fedspace;
  fs.alpha = config.alpha;
  if (s.infer_band) {
    // Steady-state reference: every satellite holds a fresh delta on round 0.
    sched::ForecastSnapshot snap;
    snap.satellites.assign(static_cast<std::size_t>(env.trace.num_satellites), {std::int64_t{0}, true, {}});
    const auto window = sched::window_slice(env.trace, 0, fs.horizon);
    const double t0 = learn::mean_loss(env.model, env.model.zeros(), env.probe);
    std::tie(fs.n_min, fs.n_max) = sched::infer_band(*regressor, window, snap, t0, fs.horizon, fs.s_max);
  }
  return std::make_unique<sched::FedSpaceScheduler>(env.trace, fs, std::move(regressor),
                                                    derive_seed(config.seed, {kSearch}));
}

}  // namespace

std::vector<std::vector<int>> load_zone_visits(const std::filesystem::path& path, int satellites, int zones) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open zone visits " + path.string());
  std::vector<std::vector<int>> out(static_cast<std::size_t>(satellites), std::vector<int>(static_cast<std::size_t>(zones), 0));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "satellite_id,zone,visits")
        throw std::runtime_error(path.string() + ":1: expected header satellite_id,zone,visits");
      continue;
    }
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    int k = -1, z = -1, v = -1;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',') ||
        std::from_chars(a.data(), a.data() + a.size(), k).ec != std::errc{} ||
        std::from_chars(b.data(), b.data() + b.size(), z).ec != std::errc{} ||
        std::from_chars(c.data(), c.data() + c.size(), v).ec != std::errc{})
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    if (k < 0 || k >= satellites || z < 0 || z >= zones || v < 0)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": value out of range");
    out[static_cast<std::size_t>(k)][static_cast<std::size_t>(z)] += v;
  }
  return out;
}

Environment prepare_environment(const SimConfig& config) {
  config.validate();
  Environment env;
  const auto& tc = config.trace;
  if (!tc.file.empty()) {
    env.trace = orbits::load_contact_trace(tc.file);
  } else {
    const auto constellation = orbits::walker_constellation(tc.constellation);
    const auto stations = orbits::reference_stations();
    env.trace = orbits::compute_connectivity(constellation, stations, tc.connectivity);
  }
  if (env.trace.num_satellites < 1) throw std::invalid_argument("trace has no satellites");
  if (env.trace.horizon() < 1) throw std::invalid_argument("trace has no time indices");

  const auto& t = config.task;
  const auto seed = t.seed;
  {
    Rng rng(derive_seed(seed, {kTaskDef}));
    env.task = learn::make_synthetic_task(t.dim, t.classes, t.separation, t.zones, t.zone_concentration, rng, t.anisotropy);
  }
  auto sample = [&](int n, std::uint64_t stream) {
    Rng rng(derive_seed(seed, {stream}));
    return learn::sample_dataset(env.task, static_cast<std::size_t>(n), rng);
  };
  env.train = sample(t.train_samples, kTrain);
  env.validation = sample(t.validation_samples, kValidation);
  env.probe = sample(t.probe_samples, kProbe);
  env.source = sample(t.source_samples, kSource);
  env.model = {t.dim, t.classes, t.l2};

  if (t.partition == "noniid") {
    if (!tc.zone_visits_file.empty()) {
      env.zone_visits = load_zone_visits(tc.zone_visits_file, env.trace.num_satellites, t.zones);
    } else if (tc.file.empty()) {
      const auto constellation = orbits::walker_constellation(tc.constellation);
      env.zone_visits = orbits::latitude_band_visits(
          constellation, t.zones, static_cast<double>(env.trace.horizon()) * env.trace.t0_seconds);
    } else {
      throw std::invalid_argument(
          "non-IID partitioning with a trace file needs trace.zone_visits_file (satellite_id,zone,visits)");
    }
  }
  return env;
}

learn::Partitioning make_partition(const SimConfig& config, const Environment& env, const learn::Dataset& data,
                                   std::uint64_t seed) {
  Rng rng(seed);
  if (config.task.partition == "iid") return learn::partition_iid(data, env.trace.num_satellites, rng);
  if (static_cast<int>(env.zone_visits.size()) != env.trace.num_satellites)
    throw std::invalid_argument("zone visit table does not match the trace's satellite count");
  return learn::partition_noniid_by_visits(data, env.zone_visits, rng);
}

double centralized_ceiling(const Environment& env, int iterations, double lr) {
  if (iterations < 1 || !(lr > 0.0)) throw std::invalid_argument("centralized_ceiling: invalid schedule");
  const auto& data = env.train;
  const auto d = static_cast<std::size_t>(data.dim);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  // Diagonal preconditioner from per-feature second moments; biases use 1.
  std::vector<double> second(d, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    for (std::size_t j = 0; j < d; ++j) second[j] += x[j] * x[j];
  }
  auto w = env.model.zeros();
  std::vector<double> precond(w.dim(), 1.0);
  for (int c = 0; c < env.model.classes; ++c)
    for (std::size_t j = 0; j < d; ++j)
      precond[static_cast<std::size_t>(c) * d + j] = static_cast<double>(data.size()) / (second[j] + 1e-12);

  std::vector<double> g(w.dim());
  double loss = learn::loss_and_grad(env.model, w, data, all, g);
  double best = learn::evaluate(env.model, w, env.validation);
  for (int it = 0; it < iterations && lr > 1e-8; ++it) {
    auto trial = w;
    for (std::size_t j = 0; j < w.dim(); ++j) trial.values[j] -= lr * precond[j] * g[j];
    std::vector<double> trial_g(w.dim());
    const double trial_loss = learn::loss_and_grad(env.model, trial, data, all, trial_g);
    if (!(trial_loss <= loss)) {
      lr *= 0.5;
      continue;
    }
    w = std::move(trial);
    g = std::move(trial_g);
    loss = trial_loss;
    best = std::max(best, learn::evaluate(env.model, w, env.validation));
  }
  return best;
}

FitReport fit_utility(const SimConfig& config, const Environment& env) {
  config.validate();
  const auto seed = config.task.seed;
  const auto part = make_partition(config, env, env.source, derive_seed(seed, {kSourcePartition}));
  utility::SourceTask source{env.model, &env.source, part.members()};
  std::erase_if(source.partitions, [](const auto& p) { return p.empty(); });

  utility::SamplerConfig sc;
  sc.pretrain_rounds = config.utility.pretrain_rounds;
  sc.s_max = config.scheduler.fedspace.s_max;
  sc.local = config.utility.local.value_or(config.local);
  sc.alpha = config.alpha;
  sc.draw = config.utility.draw == "participation" ? utility::DrawMode::Participation : utility::DrawMode::Uniform;
  sc.seed = derive_seed(seed, {kSampler});
  if (static_cast<int>(source.partitions.size()) != env.trace.num_satellites)
    throw std::invalid_argument("source partition left a satellite without samples; increase task.source_samples");
  utility::UtilitySampler sampler(std::move(source), sc);

  FitReport report;
  Rng sample_rng(derive_seed(seed, {kSamples}));
  report.samples = utility::generate_utility_samples(sampler, config.utility.samples, sample_rng);
  const std::vector<int> fresh(static_cast<std::size_t>(env.trace.num_satellites), 0);
  const std::vector<int> stale(fresh.size(), sc.s_max);
  std::map<int, std::pair<double, double>> by_start;
  for (const auto& s : report.samples) {
    auto it = by_start.find(s.i_start);
    if (it == by_start.end())
      it = by_start.emplace(s.i_start, std::pair{sampler.delta_f(fresh, s.i_start), sampler.delta_f(stale, s.i_start)}).first;
    report.mean_fresh_delta_f += it->second.first;
    report.mean_stale_delta_f += it->second.second;
  }
  report.mean_fresh_delta_f /= static_cast<double>(report.samples.size());
  report.mean_stale_delta_f /= static_cast<double>(report.samples.size());
  Rng fit_rng(derive_seed(seed, {kForestFit}));
  report.regressor = utility::fit_utility_regressor(report.samples, sc.s_max,
                                                    {config.utility.forest, config.utility.holdout_fraction}, fit_rng);
  return report;
}

std::optional<double> time_to_target(const Metrics& metrics, double target) {
  for (const auto& p : metrics.curve)
    if (p.accuracy >= target) return static_cast<double>(p.time_index) * metrics.t0_seconds / 86400.0;
  return std::nullopt;
}

Metrics run(const SimConfig& config, const Environment& env, std::shared_ptr<const utility::UtilityModel> regressor) {
  config.validate();
  const int K = env.trace.num_satellites;
  const auto partition = make_partition(config, env, env.train, derive_seed(config.seed, {kPartition}));

  std::vector<fl::SatelliteState> sats(static_cast<std::size_t>(K));
  {
    auto members = partition.members();
    for (int k = 0; k < K; ++k) {
      sats[static_cast<std::size_t>(k)].id = k;
      sats[static_cast<std::size_t>(k)].partition = std::move(members[static_cast<std::size_t>(k)]);
    }
  }
  for (const auto& s : sats)
    if (s.partition.empty())
      throw std::invalid_argument("satellite " + std::to_string(s.id) + " received no training samples");

  const auto& model = env.model;
  const auto& train = env.train;
  fl::LocalTrainer trainer{
      [&model, &train](const ModelParams& w, std::span<const std::size_t> batch, std::span<double> g) {
        return learn::loss_and_grad(model, w, train, batch, g);
      },
      config.local, derive_seed(config.seed, {kTraining})};

  auto scheduler = make_scheduler(config, env, std::move(regressor));

  Metrics m;
  m.scheduler = config.scheduler.label();
  m.seed = config.seed;
  m.t0_seconds = env.trace.t0_seconds;
  m.target_accuracy = config.target_accuracy;
  m.config = config_to_json(config);

  fl::ServerState server{model.zeros(), 0, {}, {}, 0};
  const double decay = config.scheduler.fedspace.status_decay;
  double status = learn::mean_loss(model, server.model, env.probe);

  auto record_point = [&](std::int64_t index) {
    CurvePoint p;
    p.time_index = index;
    p.hours = static_cast<double>(index) * m.t0_seconds / 3600.0;
    p.round = server.round;
    p.accuracy = learn::evaluate(model, server.model, env.validation);
    p.loss = learn::mean_loss(model, server.model, env.validation);
    m.curve.push_back(p);
    return config.target_accuracy > 0.0 && p.accuracy >= config.target_accuracy;
  };

  const auto limit = config.max_indices(env.trace);
  bool done = record_point(0) && config.stop_at_target;
  for (std::int64_t i = 0; i < limit && !done; ++i) {
    const auto& connected = env.trace.at(i);
    const auto rec = fl::server_step(server, connected, sats, *scheduler, trainer, {config.alpha, status});
    m.total_contacts += static_cast<std::int64_t>(connected.size());
    m.uploads += static_cast<std::int64_t>(rec.uploads.size());
    m.idle_contacts += static_cast<std::int64_t>(rec.idle.size());
    m.cold_contacts += static_cast<std::int64_t>(rec.cold.size());
    if (rec.aggregated) {
      ++m.global_updates;
      AggregationRecord a{rec.time_index, rec.round_after, {}};
      for (const auto& e : rec.aggregated_entries) {
        a.staleness.push_back(e.staleness);
        ++m.staleness_histogram[e.staleness];
      }
      m.aggregated_gradients += static_cast<std::int64_t>(a.staleness.size());
      m.aggregations.push_back(std::move(a));
      status = decay * status + (1.0 - decay) * learn::mean_loss(model, server.model, env.probe);
    }
    m.indices_run = i + 1;
    if ((i + 1) % config.eval_every == 0 || i + 1 == limit) done = record_point(i + 1) && config.stop_at_target;
  }
  m.buffered_at_end = static_cast<std::int64_t>(server.buffer.size());
  for (const auto& s : sats) m.trainings += static_cast<std::int64_t>(s.trainings);
  if (config.target_accuracy > 0.0) m.time_to_target_days = time_to_target(m, config.target_accuracy);
  if (const auto* fs = dynamic_cast<const sched::FedSpaceScheduler*>(scheduler.get())) m.plans = fs->plans();
  return m;
}

Metrics run(const SimConfig& config) {
  const auto env = prepare_environment(config);
  std::shared_ptr<const utility::UtilityModel> regressor;
  if (config.scheduler.kind == "fedspace" && !config.scheduler.regressor.empty()) {
    auto r = utility::UtilityRegressor::load(config.scheduler.regressor);
    if (r.s_max() != config.scheduler.fedspace.s_max)
      throw std::invalid_argument("regressor s_max " + std::to_string(r.s_max()) +
                                  " does not match scheduler.fedspace.s_max");
    regressor = std::make_shared<utility::UtilityRegressor>(std::move(r));
  }
  return run(config, env, std::move(regressor));
}

json metrics_to_json(const Metrics& m) {
  json curve = json::array();
  for (const auto& p : m.curve)
    curve.push_back({{"time_index", p.time_index}, {"hours", p.hours}, {"round", p.round},
                     {"accuracy", p.accuracy}, {"loss", p.loss}});
  json aggs = json::array();
  for (const auto& a : m.aggregations)
    aggs.push_back({{"time_index", a.time_index}, {"round", a.round}, {"staleness", a.staleness}});
  json hist = json::object();
  for (const auto& [s, n] : m.staleness_histogram) hist[std::to_string(s)] = n;
  json plans = json::array();
  for (const auto& p : m.plans) {
    std::string bits;
    for (auto b : p.schedule.bits) bits.push_back(b ? '1' : '0');
    plans.push_back({{"start_index", p.start_index}, {"bits", bits}, {"value", p.value},
                     {"training_status", p.training_status}});
  }
  json j = {
      {"scheduler", m.scheduler},
      {"seed", m.seed},
      {"config", m.config},
      {"curve", curve},
      {"aggregations", aggs},
      {"staleness_histogram", hist},
      {"plans", plans},
      {"summary",
       {{"t0_seconds", m.t0_seconds},
        {"indices_run", m.indices_run},
        {"simulated_days", static_cast<double>(m.indices_run) * m.t0_seconds / 86400.0},
        {"total_contacts", m.total_contacts},
        {"uploads", m.uploads},
        {"idle_contacts", m.idle_contacts},
        {"cold_contacts", m.cold_contacts},
        {"aggregated_gradients", m.aggregated_gradients},
        {"buffered_at_end", m.buffered_at_end},
        {"global_updates", m.global_updates},
        {"trainings", m.trainings},
        {"final_accuracy", m.curve.empty() ? 0.0 : m.curve.back().accuracy},
        {"target_accuracy", m.target_accuracy},
        {"time_to_target_days", m.time_to_target_days ? json(*m.time_to_target_days) : json(nullptr)}}},
  };
  return j;
}

std::string metrics_file_stem(const Metrics& m) { return m.scheduler + "_seed" + std::to_string(m.seed); }

void write_curve_csv(const Metrics& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "time_index,hours,round,accuracy,loss\n";
  for (const auto& p : m.curve)
    out << p.time_index << ',' << fmt(p.hours) << ',' << p.round << ',' << fmt(p.accuracy) << ',' << fmt(p.loss)
        << '\n';
}

void write_metrics(const Metrics& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto stem = metrics_file_stem(m);
  {
    std::ofstream out(dir / (stem + ".json"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write metrics under " + dir.string());
    out << metrics_to_json(m).dump(1) << '\n';
  }
  write_curve_csv(m, dir / (stem + "_curve.csv"));
}

std::map<SweepKey, Metrics> sweep(const SimConfig& base, const std::vector<GridPoint>& grid,
                                  const std::vector<std::uint64_t>& seeds, int threads) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  if (seeds.empty()) throw std::invalid_argument("sweep: no seeds");
  if (threads < 1) throw std::invalid_argument("sweep: threads must be >= 1");

  struct Job {
    SweepKey key;
    SimConfig config;
    std::shared_ptr<const Environment> env;
    std::shared_ptr<const utility::UtilityModel> regressor;
  };
  std::map<std::string, std::shared_ptr<const Environment>> envs;
  std::map<std::string, std::shared_ptr<const utility::UtilityModel>> regressors;
  std::vector<Job> jobs;
  std::set<std::string> labels;

  const json base_doc = config_to_json(base);
  for (const auto& point : grid) {
    if (!labels.insert(point.label).second) throw std::invalid_argument("sweep: duplicate grid label " + point.label);
    json doc = base_doc;
    for (const auto& o : point.overrides) apply_override(doc, o);
    const auto cfg = config_from_json(doc);
    const auto env_key = json{doc.at("trace"), doc.at("task")}.dump();
    auto& env = envs[env_key];
    if (!env) env = std::make_shared<const Environment>(prepare_environment(cfg));

    std::shared_ptr<const utility::UtilityModel> reg;
    if (cfg.scheduler.kind == "fedspace") {
      if (cfg.scheduler.regressor.empty())
        throw std::invalid_argument("sweep: grid point '" + point.label +
                                    "' uses fedspace without scheduler.regressor; run fit-utility first");
      auto& slot = regressors[cfg.scheduler.regressor];
      if (!slot) slot = std::make_shared<utility::UtilityRegressor>(utility::UtilityRegressor::load(cfg.scheduler.regressor));
      reg = slot;
    }
    for (auto seed : seeds) {
      auto c = cfg;
      c.seed = seed;
      jobs.push_back({{point.label, seed}, std::move(c), env, reg});
    }
  }

  std::vector<std::optional<Metrics>> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const auto j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      {
        std::lock_guard lock(err_mu);
        if (error) return;
      }
      try {
        results[j] = run(jobs[j].config, *jobs[j].env, jobs[j].regressor);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(threads), jobs.size());
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  std::map<SweepKey, Metrics> out;
  for (std::size_t j = 0; j < jobs.size(); ++j) out.emplace(jobs[j].key, std::move(*results[j]));
  return out;
}

}  // namespace fedspace::sim
