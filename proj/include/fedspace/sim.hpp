#pragma once

// End-to-end experiment driver: trace, task, partitioning, scheduler and the
// ground-station loop, with the metrics it records.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedspace/flcore.hpp"
#include "fedspace/learntask.hpp"
#include "fedspace/orbits.hpp"
#include "fedspace/search.hpp"
#include "fedspace/utility.hpp"

namespace fedspace::sim {

struct TraceConfig {
  std::string file;  // empty: generate from the constellation below
  std::string zone_visits_file;  // satellite_id,zone,visits; needed for non-IID with a file trace
  orbits::ConstellationSpec constellation;
  orbits::ConnectivityParams connectivity;

  void validate() const;
};

struct TaskConfig {
  int dim = 32;
  int classes = 10;
  double separation = 3.0;
  int zones = 10;
  double zone_concentration = 0.5;
  double anisotropy = 1.0;
  int train_samples = 20000;
  int validation_samples = 4000;
  int probe_samples = 500;
  int source_samples = 5000;
  double l2 = 1e-4;
  std::string partition = "noniid";  // iid | noniid
  std::uint64_t seed = 1;            // fixes the task and all datasets

  void validate() const;
};

struct SchedulerConfig {
  std::string kind = "fedspace";  // sync | async | fedbuff | fedspace
  int buffer_size = 8;            // FedBuff M
  sched::FedSpaceConfig fedspace;
  std::string regressor;          // artifact path for fedspace
  bool infer_band = false;        // derive n_min/n_max from the regressor on the first window

  void validate() const;
  std::string label() const;  // e.g. "fedbuff-M8"
};

struct UtilityFitConfig {
  int samples = 2000;
  int pretrain_rounds = 60;
  std::string draw = "uniform";  // uniform | participation
  forest::ForestParams forest;
  double holdout_fraction = 0.2;
  std::optional<fl::LocalTrainConfig> local;  // source pretraining; falls back to SimConfig::local

  void validate() const;
};

struct SimConfig {
  TraceConfig trace;
  TaskConfig task;
  SchedulerConfig scheduler;
  UtilityFitConfig utility;
  fl::LocalTrainConfig local;
  double alpha = 0.5;
  int eval_every = 4;
  double target_accuracy = 0.0;  // 0: no target
  bool stop_at_target = true;
  double max_days = 0.0;  // 0: one pass over the trace; longer runs wrap around it
  std::uint64_t seed = 0;

  void validate() const;
  std::int64_t max_indices(const orbits::ConnectivitySets& trace) const;
};

// JSON round trip. Unknown keys anywhere are errors.
SimConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const SimConfig& c);
SimConfig load_config(const std::filesystem::path& path);

// Sets a dotted path ("scheduler.buffer_size") in a config document. The
// value text is parsed as JSON and falls back to a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Everything a run shares with other runs of the same trace and task.
struct Environment {
  orbits::ConnectivitySets trace;
  std::vector<std::vector<int>> zone_visits;  // [satellite][zone]; empty for iid
  learn::SyntheticTask task;
  learn::LogisticModel model;
  learn::Dataset train, validation, probe, source;
};

Environment prepare_environment(const SimConfig& config);

// Reads satellite_id,zone,visits rows into a [satellite][zone] table.
std::vector<std::vector<int>> load_zone_visits(const std::filesystem::path& path, int satellites, int zones);

learn::Partitioning make_partition(const SimConfig& config, const Environment& env, const learn::Dataset& data,
                                   std::uint64_t seed);

// Best validation accuracy of diagonally preconditioned full-batch gradient
// descent on all training data; the step halves whenever the loss would rise.
double centralized_ceiling(const Environment& env, int iterations = 400, double lr = 1.0);

struct FitReport {
  utility::UtilityRegressor regressor;
  std::vector<utility::UtilitySample> samples;
  // Mean loss reduction over the samples' start rounds when every satellite
  // contributes with staleness 0, and with staleness s_max.
  double mean_fresh_delta_f = 0.0;
  double mean_stale_delta_f = 0.0;
};

// Phase 1: pretrain on the source dataset, draw utility samples, fit the regressor.
FitReport fit_utility(const SimConfig& config, const Environment& env);

struct CurvePoint {
  std::int64_t time_index = 0;
  double hours = 0.0;
  std::int64_t round = 0;
  double accuracy = 0.0;
  double loss = 0.0;
};

struct AggregationRecord {
  std::int64_t time_index = 0;
  std::int64_t round = 0;  // round after the update
  std::vector<int> staleness;  // one per aggregated gradient
};

struct Metrics {
  std::string scheduler;
  std::uint64_t seed = 0;
  double t0_seconds = 900.0;
  std::int64_t indices_run = 0;
  std::vector<CurvePoint> curve;
  std::vector<AggregationRecord> aggregations;
  std::map<int, std::int64_t> staleness_histogram;
  std::int64_t total_contacts = 0;
  std::int64_t uploads = 0;
  std::int64_t idle_contacts = 0;
  std::int64_t cold_contacts = 0;
  std::int64_t aggregated_gradients = 0;
  std::int64_t buffered_at_end = 0;
  std::int64_t global_updates = 0;
  std::int64_t trainings = 0;
  double target_accuracy = 0.0;
  std::optional<double> time_to_target_days;
  std::vector<sched::PlanRecord> plans;
  nlohmann::json config;
};

// First simulated time (days) with accuracy >= target, if any.
std::optional<double> time_to_target(const Metrics& metrics, double target);

Metrics run(const SimConfig& config, const Environment& env,
            std::shared_ptr<const utility::UtilityModel> regressor = nullptr);
// Prepares the environment and loads the regressor artifact as needed.
Metrics run(const SimConfig& config);

nlohmann::json metrics_to_json(const Metrics& m);
std::string metrics_file_stem(const Metrics& m);
void write_metrics(const Metrics& m, const std::filesystem::path& dir);
void write_curve_csv(const Metrics& m, const std::filesystem::path& path);

struct GridPoint {
  std::string label;
  std::vector<std::string> overrides;  // "path=value"
};

using SweepKey = std::pair<std::string, std::uint64_t>;

// Runs every (grid point, seed) pair on a bounded pool of `threads` workers.
// Runs sharing the task seed share one environment; fedspace runs fit (or
// load) their regressor once per distinct configuration.
std::map<SweepKey, Metrics> sweep(const SimConfig& base, const std::vector<GridPoint>& grid,
                                  const std::vector<std::uint64_t>& seeds, int threads = 1);

}  // namespace fedspace::sim
