#pragma once

// Schedule search against the learned utility, and the planning scheduler
// built on it.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fedspace/orbits.hpp"
#include "fedspace/schedulers.hpp"
#include "fedspace/utility.hpp"

namespace fedspace::sched {

struct FedSpaceConfig {
  int horizon = 24;  // I_0
  int n_min = 4;
  int n_max = 8;
  int trials = 5000;
  int s_max = 8;
  double alpha = 0.5;
  double status_decay = 0.9;  // EMA decay of the probe-loss training status

  void validate() const;
};

struct SearchResult {
  ScheduleVector schedule;
  double value = 0.0;
  int trials = 0;
};

// Sum over the schedule's aggregations of the predicted utility of each
// forecast staleness vector (clamped to s_max).
double schedule_value(const ScheduleVector& schedule, std::span<const std::vector<int>> window,
                      const ForecastSnapshot& snapshot, double training_status,
                      const utility::UtilityModel& model, int s_max);

// Strict preference: higher value, then fewer aggregations, then the
// lexicographically smaller bit vector.
bool preferred(double value, const ScheduleVector& a, double best_value, const ScheduleVector& best);

// Random search over schedules with n_min..n_max aggregations placed at
// uniformly random distinct positions.
SearchResult random_search(const utility::UtilityModel& model, std::span<const std::vector<int>> window,
                           const ForecastSnapshot& snapshot, double training_status,
                           const FedSpaceConfig& config, std::int64_t start_index, Rng& rng);

// Best of an explicit candidate list.
SearchResult search_candidates(const utility::UtilityModel& model, std::span<const std::vector<int>> window,
                               const ForecastSnapshot& snapshot, double training_status, int s_max,
                               std::span<const ScheduleVector> candidates);

// All schedules of length `horizon` with n_min..n_max ones.
std::vector<ScheduleVector> enumerate_band(int horizon, int n_min, int n_max, std::int64_t start_index = 0);

// Evenly spaced aggregations for each n in 1..horizon; keeps the range of n
// whose predicted window utility is within `fraction` of the best.
std::pair<int, int> infer_band(const utility::UtilityModel& model, std::span<const std::vector<int>> window,
                               const ForecastSnapshot& snapshot, double training_status, int horizon, int s_max,
                               double fraction = 0.9);

struct PlanRecord {
  std::int64_t start_index = 0;
  ScheduleVector schedule;
  double value = 0.0;
  double training_status = 0.0;
};

/// Plans I_0 aggregation bits at every window boundary with random search and
/// serves them one index at a time.
class FedSpaceScheduler final : public fl::Scheduler {
 public:
  FedSpaceScheduler(const orbits::ConnectivitySets& trace, FedSpaceConfig config,
                    std::shared_ptr<const utility::UtilityModel> model, std::uint64_t seed);

  void on_step_begin(const fl::SchedulerContext& ctx) override;
  bool decide(const fl::SchedulerContext& ctx) override;
  std::string name() const override { return "fedspace"; }

  const std::vector<PlanRecord>& plans() const noexcept { return plans_; }

 private:
  const orbits::ConnectivitySets& trace_;
  FedSpaceConfig config_;
  std::shared_ptr<const utility::UtilityModel> model_;
  std::uint64_t seed_;
  std::optional<ForecastSnapshot> pending_snapshot_;
  std::vector<PlanRecord> plans_;
};

}  // namespace fedspace::sched
