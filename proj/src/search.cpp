#include "fedspace/search.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fedspace::sched {

void FedSpaceConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("fedspace: horizon must be >= 1");
  if (n_min < 1 || n_min > n_max) throw std::invalid_argument("fedspace: need 1 <= n_min <= n_max");
  if (n_max > horizon) throw std::invalid_argument("fedspace: n_max exceeds the horizon");
  if (trials < 1) throw std::invalid_argument("fedspace: trials must be >= 1");
  if (s_max < 0) throw std::invalid_argument("fedspace: s_max must be >= 0");
  if (!(alpha >= 0.0)) throw std::invalid_argument("fedspace: alpha must be >= 0");
  if (!(status_decay >= 0.0 && status_decay < 1.0)) throw std::invalid_argument("fedspace: status_decay must be in [0, 1)");
}

double schedule_value(const ScheduleVector& schedule, std::span<const std::vector<int>> window,
                      const ForecastSnapshot& snapshot, double training_status,
                      const utility::UtilityModel& model, int s_max) {
  const auto fc = forecast_staleness(schedule, window, snapshot);
  double total = 0.0;
  for (const auto& v : fc.vectors) {
    const bool empty = std::all_of(v.entries.begin(), v.entries.end(), [](int e) { return e < 0; });
    if (empty) continue;  // no model update happens
    total += model.predict(featurize(clamp_staleness(v, s_max), training_status, s_max));
  }
  return total;
}

bool preferred(double value, const ScheduleVector& a, double best_value, const ScheduleVector& best) {
  if (value != best_value) return value > best_value;
  const int na = a.aggregations(), nb = best.aggregations();
  if (na != nb) return na < nb;
  return a.bits < best.bits;
}

namespace {

void check_window(std::span<const std::vector<int>> window, int horizon) {
  if (static_cast<int>(window.size()) != horizon)
    throw std::invalid_argument("search: window length does not match the horizon");
}

}  // namespace

SearchResult random_search(const utility::UtilityModel& model, std::span<const std::vector<int>> window,
                           const ForecastSnapshot& snapshot, double training_status,
                           const FedSpaceConfig& config, std::int64_t start_index, Rng& rng) {
  config.validate();
  check_window(window, config.horizon);
  std::uniform_int_distribution<int> count(config.n_min, config.n_max);
  std::vector<int> positions(static_cast<std::size_t>(config.horizon));

  SearchResult best;
  bool have = false;
  ScheduleVector cand;
  cand.start_index = start_index;
  for (int t = 0; t < config.trials; ++t) {
    const int n = count(rng);
    std::iota(positions.begin(), positions.end(), 0);
    // Partial Fisher-Yates: the first n entries are a uniform n-subset.
    for (int j = 0; j < n; ++j) {
      std::uniform_int_distribution<int> pick(j, config.horizon - 1);
      std::swap(positions[static_cast<std::size_t>(j)], positions[static_cast<std::size_t>(pick(rng))]);
    }
    cand.bits.assign(static_cast<std::size_t>(config.horizon), 0);
    for (int j = 0; j < n; ++j) cand.bits[static_cast<std::size_t>(positions[static_cast<std::size_t>(j)])] = 1;
    const double v = schedule_value(cand, window, snapshot, training_status, model, config.s_max);
    if (!have || preferred(v, cand, best.value, best.schedule)) {
      best.schedule = cand;
      best.value = v;
      have = true;
    }
  }
  best.trials = config.trials;
  return best;
}

SearchResult search_candidates(const utility::UtilityModel& model, std::span<const std::vector<int>> window,
                               const ForecastSnapshot& snapshot, double training_status, int s_max,
                               std::span<const ScheduleVector> candidates) {
  if (candidates.empty()) throw std::invalid_argument("search_candidates: no candidates");
  SearchResult best;
  bool have = false;
  for (const auto& c : candidates) {
    const double v = schedule_value(c, window, snapshot, training_status, model, s_max);
    if (!have || preferred(v, c, best.value, best.schedule)) {
      best.schedule = c;
      best.value = v;
      have = true;
    }
  }
  best.trials = static_cast<int>(candidates.size());
  return best;
}

std::vector<ScheduleVector> enumerate_band(int horizon, int n_min, int n_max, std::int64_t start_index) {
  if (horizon < 1 || horizon > 24) throw std::invalid_argument("enumerate_band: horizon must be in [1, 24]");
  if (n_min < 0 || n_min > n_max || n_max > horizon) throw std::invalid_argument("enumerate_band: invalid band");
  std::vector<ScheduleVector> out;
  for (std::uint32_t mask = 0; mask < (std::uint32_t{1} << horizon); ++mask) {
    const int n = std::popcount(mask);
    if (n < n_min || n > n_max) continue;
    ScheduleVector s;
    s.start_index = start_index;
    s.bits.resize(static_cast<std::size_t>(horizon));
    for (int j = 0; j < horizon; ++j) s.bits[static_cast<std::size_t>(j)] = (mask >> j) & 1U;
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<int, int> infer_band(const utility::UtilityModel& model, std::span<const std::vector<int>> window,
                               const ForecastSnapshot& snapshot, double training_status, int horizon, int s_max,
                               double fraction) {
  check_window(window, horizon);
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("infer_band: fraction must be in (0, 1]");
  std::vector<double> values;
  for (int n = 1; n <= horizon; ++n) {
    ScheduleVector s;
    s.bits.assign(static_cast<std::size_t>(horizon), 0);
    // n evenly spaced aggregations, the last one at the end of the window.
    for (int j = 1; j <= n; ++j) {
      const auto pos = static_cast<std::size_t>(std::lround(static_cast<double>(j) * horizon / n) - 1);
      s.bits[pos] = 1;
    }
    values.push_back(schedule_value(s, window, snapshot, training_status, model, s_max));
  }
  const double best = *std::max_element(values.begin(), values.end());
  if (!(best > 0.0)) return {1, 1};
  int lo = horizon, hi = 1;
  for (int n = 1; n <= horizon; ++n) {
    if (values[static_cast<std::size_t>(n - 1)] >= fraction * best) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
  }
  return {lo, hi};
}

FedSpaceScheduler::FedSpaceScheduler(const orbits::ConnectivitySets& trace, FedSpaceConfig config,
                                     std::shared_ptr<const utility::UtilityModel> model, std::uint64_t seed)
    : trace_(trace), config_(config), model_(std::move(model)), seed_(seed) {
  config_.validate();
  if (!model_) throw std::invalid_argument("fedspace scheduler: no utility model");
  if (trace_.horizon() < 1) throw std::invalid_argument("fedspace scheduler: empty trace");
}

void FedSpaceScheduler::on_step_begin(const fl::SchedulerContext& ctx) {
  if (ctx.time_index % config_.horizon != 0) return;
  const auto snapshot = ForecastSnapshot::capture(ctx.server, ctx.satellites);
  const auto window = window_slice(trace_, ctx.time_index, config_.horizon);
  Rng rng(derive_seed(seed_, {static_cast<std::uint64_t>(ctx.time_index)}));
  auto result = random_search(*model_, window, snapshot, ctx.training_status, config_, ctx.time_index, rng);
  plans_.push_back({ctx.time_index, std::move(result.schedule), result.value, ctx.training_status});
}

bool FedSpaceScheduler::decide(const fl::SchedulerContext& ctx) {
  if (plans_.empty()) throw std::logic_error("fedspace scheduler: no plan (on_step_begin was not called)");
  const auto& plan = plans_.back();
  const auto offset = ctx.time_index - plan.start_index;
  if (offset < 0 || offset >= config_.horizon)
    throw std::logic_error("fedspace scheduler: time index outside the current plan");
  return plan.schedule.bits[static_cast<std::size_t>(offset)] != 0;
}

}  // namespace fedspace::sched
