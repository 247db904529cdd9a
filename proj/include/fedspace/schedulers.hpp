#pragma once

// Aggregation policies and the staleness forecast they are planned against.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedspace/flcore.hpp"
#include "fedspace/orbits.hpp"

namespace fedspace::sched {

// `contributors` are the distinct satellite ids that currently have a delta in the buffer.
bool sync_indicator(std::span<const int> contributors, int num_satellites);
bool async_indicator(std::span<const int> contributors);
bool fedbuff_indicator(std::span<const int> contributors, int buffer_size);

class SyncScheduler final : public fl::Scheduler {
 public:
  bool decide(const fl::SchedulerContext& ctx) override;
  std::string name() const override { return "sync"; }
};

class AsyncScheduler final : public fl::Scheduler {
 public:
  bool decide(const fl::SchedulerContext& ctx) override;
  std::string name() const override { return "async"; }
};

class FedBuffScheduler final : public fl::Scheduler {
 public:
  explicit FedBuffScheduler(int buffer_size);
  bool decide(const fl::SchedulerContext& ctx) override;
  std::string name() const override { return "fedbuff"; }
  int buffer_size() const noexcept { return buffer_size_; }

 private:
  int buffer_size_;
};

// Serves a fixed bit sequence indexed by time index; zero past the end.
class FixedScheduler final : public fl::Scheduler {
 public:
  explicit FixedScheduler(std::vector<std::uint8_t> bits, std::int64_t start_index = 0)
      : bits_(std::move(bits)), start_(start_index) {}
  bool decide(const fl::SchedulerContext& ctx) override;
  std::string name() const override { return "fixed"; }

 private:
  std::vector<std::uint8_t> bits_;
  std::int64_t start_;
};

/// Binary aggregation plan a^i .. a^{i+I0-1}.
struct ScheduleVector {
  std::vector<std::uint8_t> bits;
  std::int64_t start_index = 0;

  int aggregations() const noexcept;
  bool operator==(const ScheduleVector&) const = default;
};

/// Per-satellite staleness of the buffer consumed at `agg_index`; -1 marks a
/// satellite that does not contribute. A satellite with several buffered
/// deltas reports the freshest.
struct StalenessVector {
  std::vector<int> entries;
  std::int64_t agg_index = 0;

  bool operator==(const StalenessVector&) const = default;
};

struct SatelliteSnapshot {
  std::optional<std::int64_t> base_round;  // empty: never downloaded
  bool pending = false;
  std::optional<std::int64_t> buffered_base_round;  // base round of its delta in the server buffer
};

struct ForecastSnapshot {
  std::int64_t current_round = 0;
  std::vector<SatelliteSnapshot> satellites;

  static ForecastSnapshot capture(const fl::ServerState& server, std::span<const fl::SatelliteState> sats);
};

struct Forecast {
  std::vector<StalenessVector> vectors;  // one per set bit, in index order
  std::vector<std::vector<int>> idle;    // idle satellites per window offset
  int idle_contacts = 0;
  std::int64_t final_round = 0;
};

// Copies C_start .. C_{start+length-1}, wrapping around the trace.
std::vector<std::vector<int>> window_slice(const orbits::ConnectivitySets& trace, std::int64_t start, int length);

/// Replays the satellite/server bookkeeping symbolically over the window under
/// `schedule`. Exact: matches what `fl::server_step` would record.
Forecast forecast_staleness(const ScheduleVector& schedule, std::span<const std::vector<int>> window,
                            const ForecastSnapshot& snapshot);

// [count(-1), count(0), ..., count(s_max), T]
std::vector<double> featurize(const StalenessVector& s, double training_status, int s_max);
inline std::size_t feature_count(int s_max) { return static_cast<std::size_t>(s_max) + 3; }

// Folds staleness above s_max into the s_max bin.
StalenessVector clamp_staleness(StalenessVector s, int s_max);

}  // namespace fedspace::sched
