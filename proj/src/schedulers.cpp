#include "fedspace/schedulers.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedspace::sched {

bool sync_indicator(std::span<const int> contributors, int num_satellites) {
  return num_satellites > 0 && static_cast<int>(contributors.size()) == num_satellites;
}

bool async_indicator(std::span<const int> contributors) { return !contributors.empty(); }

bool fedbuff_indicator(std::span<const int> contributors, int buffer_size) {
  if (buffer_size < 1) throw std::invalid_argument("fedbuff: buffer size must be >= 1");
  return static_cast<int>(contributors.size()) >= buffer_size;
}

bool SyncScheduler::decide(const fl::SchedulerContext& ctx) {
  return sync_indicator(ctx.server.contributors, ctx.num_satellites);
}

bool AsyncScheduler::decide(const fl::SchedulerContext& ctx) { return async_indicator(ctx.server.contributors); }

FedBuffScheduler::FedBuffScheduler(int buffer_size) : buffer_size_(buffer_size) {
  if (buffer_size < 1) throw std::invalid_argument("fedbuff: buffer size must be >= 1");
}

bool FedBuffScheduler::decide(const fl::SchedulerContext& ctx) {
  return fedbuff_indicator(ctx.server.contributors, buffer_size_);
}

bool FixedScheduler::decide(const fl::SchedulerContext& ctx) {
  const auto off = ctx.time_index - start_;
  if (off < 0 || off >= static_cast<std::int64_t>(bits_.size())) return false;
  return bits_[static_cast<std::size_t>(off)] != 0;
}

int ScheduleVector::aggregations() const noexcept {
  return static_cast<int>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

ForecastSnapshot ForecastSnapshot::capture(const fl::ServerState& server,
                                           std::span<const fl::SatelliteState> sats) {
  ForecastSnapshot snap;
  snap.current_round = server.round;
  snap.satellites.resize(sats.size());
  for (std::size_t k = 0; k < sats.size(); ++k) {
    snap.satellites[k].base_round = sats[k].base_round;
    snap.satellites[k].pending = sats[k].pending.has_value();
  }
  // A satellite can hold several buffered deltas; the freshest one stands for it.
  for (const auto& e : server.buffer) {
    auto& b = snap.satellites.at(static_cast<std::size_t>(e.satellite_id)).buffered_base_round;
    const auto base = server.round - e.staleness;
    if (!b || base > *b) b = base;
  }
  return snap;
}

std::vector<std::vector<int>> window_slice(const orbits::ConnectivitySets& trace, std::int64_t start, int length) {
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(std::max(length, 0)));
  for (int j = 0; j < length; ++j) out.push_back(trace.at(start + j));
  return out;
}

Forecast forecast_staleness(const ScheduleVector& schedule, std::span<const std::vector<int>> window,
                            const ForecastSnapshot& snapshot) {
  if (schedule.bits.size() != window.size())
    throw std::invalid_argument("forecast_staleness: schedule and window lengths differ");
  const std::size_t n = snapshot.satellites.size();

  // Compact per-satellite state; -1 encodes "absent".
  std::vector<std::int64_t> base(n, -1), buffered(n, -1);
  std::vector<std::uint8_t> pending(n, 0);
  std::vector<int> buffered_ids;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = snapshot.satellites[k];
    if (s.pending && !s.base_round) throw std::invalid_argument("forecast_staleness: pending delta without a base");
    if (s.base_round) base[k] = *s.base_round;
    pending[k] = s.pending ? 1 : 0;
    if (s.buffered_base_round) {
      buffered[k] = *s.buffered_base_round;
      buffered_ids.push_back(static_cast<int>(k));
    }
  }

  Forecast out;
  out.idle.resize(window.size());
  std::int64_t round = snapshot.current_round;
  for (std::size_t j = 0; j < window.size(); ++j) {
    for (int k : window[j]) {
      if (k < 0 || static_cast<std::size_t>(k) >= n)
        throw std::invalid_argument("forecast_staleness: satellite id outside snapshot");
      const auto ku = static_cast<std::size_t>(k);
      if (pending[ku]) {
        pending[ku] = 0;
        buffered[ku] = base[ku];
        buffered_ids.push_back(k);
      } else if (base[ku] >= 0) {
        out.idle[j].push_back(k);
        ++out.idle_contacts;
      }
    }
    if (schedule.bits[j]) {
      StalenessVector v;
      v.entries.assign(n, -1);
      v.agg_index = schedule.start_index + static_cast<std::int64_t>(j);
      for (int k : buffered_ids) v.entries[static_cast<std::size_t>(k)] = static_cast<int>(round - buffered[static_cast<std::size_t>(k)]);
      out.vectors.push_back(std::move(v));
      if (!buffered_ids.empty()) {
        ++round;
        for (int k : buffered_ids) buffered[static_cast<std::size_t>(k)] = -1;
        buffered_ids.clear();
      }
    }
    for (int k : window[j]) {
      const auto ku = static_cast<std::size_t>(k);
      if (base[ku] < 0 || round > base[ku]) {
        base[ku] = round;
        pending[ku] = 1;
      }
    }
  }
  out.final_round = round;
  return out;
}

std::vector<double> featurize(const StalenessVector& s, double training_status, int s_max) {
  if (s_max < 0) throw std::invalid_argument("featurize: s_max must be >= 0");
  std::vector<double> f(feature_count(s_max), 0.0);
  for (int e : s.entries) {
    if (e < -1 || e > s_max) throw std::out_of_range("featurize: staleness entry outside [-1, s_max]");
    f[static_cast<std::size_t>(e + 1)] += 1.0;
  }
  f.back() = training_status;
  return f;
}

StalenessVector clamp_staleness(StalenessVector s, int s_max) {
  for (auto& e : s.entries) e = std::min(e, s_max);
  return s;
}

}  // namespace fedspace::sched
