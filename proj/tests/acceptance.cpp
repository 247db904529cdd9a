// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedspace/flcore.hpp"
#include "fedspace/learntask.hpp"
#include "fedspace/schedulers.hpp"
#include "fedspace/search.hpp"
#include "fedspace/sim.hpp"
#include "replay_oracle.hpp"

using namespace fedspace;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void report(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto t = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = seconds_since(t);
  if (budget_s > 0 && s >= budget_s) {
    o.pass = false;
    o.detail += fmt("; runtime %.1f s exceeds %.0f s", s, budget_s);
  }
  if (!o.pass) ++failures;
  std::printf("criterion %2d %-4s %s (%.2f s): %s\n", id, o.pass ? "PASS" : "FAIL", title, s, o.detail.c_str());
  std::fflush(stdout);
}

sim::SimConfig reference_config() { return sim::load_config(fs::path(FEDSPACE_SOURCE_DIR) / "configs" / "reference_48.json"); }

sim::SimConfig with(sim::SimConfig c, const std::vector<std::string>& overrides) {
  auto doc = sim::config_to_json(c);
  for (const auto& o : overrides) sim::apply_override(doc, o);
  return sim::config_from_json(doc);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string days(double d) { return std::isinf(d) ? std::string("-") : fmt("%.2f", d); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---------------------------------------------------------------------------

Outcome indicators() {
  long cases = 0;
  for (int k = 1; k <= 6; ++k) {
    for (unsigned mask = 0; mask < (1u << k); ++mask) {
      std::vector<int> r;
      for (int i = 0; i < k; ++i)
        if (mask & (1u << i)) r.push_back(i);
      const auto n = static_cast<int>(r.size());
      if (sched::sync_indicator(r, k) != (n == k)) return {false, fmt("sync wrong at K=%d mask=%u", k, mask)};
      if (sched::async_indicator(r) != (n > 0)) return {false, fmt("async wrong at K=%d mask=%u", k, mask)};
      for (int m = 1; m <= k; ++m)
        if (sched::fedbuff_indicator(r, m) != (n >= m)) return {false, fmt("fedbuff M=%d wrong at K=%d", m, k)};
      if (sched::fedbuff_indicator(r, 1) != sched::async_indicator(r)) return {false, "fedbuff(1) != async"};
      if (sched::fedbuff_indicator(r, k) != sched::sync_indicator(r, k)) return {false, "fedbuff(K) != sync"};
      ++cases;
    }
  }
  return {true, fmt("%ld subsets over K=1..6", cases)};
}

Outcome sync_purity(const sim::SimConfig& cfg, const sim::Environment& env) {
  auto c = cfg;
  c.scheduler.kind = "sync";
  const auto m = sim::run(c, env);
  std::int64_t stale = 0;
  for (const auto& [s, n] : m.staleness_histogram)
    if (s != 0) stale += n;
  const double idle_frac = m.total_contacts ? static_cast<double>(m.idle_contacts) / static_cast<double>(m.total_contacts) : 0.0;
  const bool ok = m.aggregated_gradients > 0 && stale == 0 && idle_frac > 0.5;
  return {ok, fmt("%lld aggregated gradients, %lld stale, idle fraction %.3f over %lld contacts",
                  (long long)m.aggregated_gradients, (long long)stale, idle_frac, (long long)m.total_contacts)};
}

Outcome async_idleness(const sim::SimConfig& cfg, const sim::Environment& env) {
  long traces = 0, contacts = 0;
  {
    auto c = with(cfg, {"max_days=5"});
    c.scheduler.kind = "async";
    const auto m = sim::run(c, env);
    if (m.idle_contacts != 0) return {false, fmt("reference trace: %lld idle", (long long)m.idle_contacts)};
    contacts += m.total_contacts;
    ++traces;
  }
  std::mt19937_64 rng(97);
  sched::AsyncScheduler async;
  for (int t = 0; t < 50; ++t) {
    const int k = 1 + static_cast<int>(rng() % 12);
    auto world = testing::make_world(k);
    const auto window = testing::random_window(k, 200, 0.1 + 0.5 * static_cast<double>(rng() % 100) / 100.0, rng);
    for (const auto& c : window) {
      const auto rec = fl::server_step(world.server, c, world.sats, async, world.trainer, {});
      if (!rec.idle.empty()) return {false, fmt("random trace %d: idle contact", t)};
      contacts += static_cast<long>(c.size());
    }
    ++traces;
  }
  return {true, fmt("0 idle over %ld traces, %ld contacts", traces, contacts)};
}

Outcome forecast_oracle() {
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> kd(1, 10), hd(1, 24), wd(0, 40), md(1, 5);
  std::uniform_real_distribution<double> pd(0.05, 0.7);
  long vectors = 0, idle = 0;
  for (int t = 0; t < 1000; ++t) {
    const int k = kd(rng);
    auto world = testing::make_world(k);
    testing::warm_up(world, wd(rng), md(rng), rng);
    const int h = hd(rng);
    const auto window = testing::random_window(k, h, pd(rng), rng);
    std::bernoulli_distribution bit(pd(rng));
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(h));
    for (auto& b : bits) b = bit(rng);
    const auto snap = sched::ForecastSnapshot::capture(world.server, world.sats);
    const auto f = sched::forecast_staleness({bits, world.server.time_index}, window, snap);
    const auto r = testing::replay(world, bits, window);
    if (f.vectors != r.vectors || f.idle != r.idle || f.final_round != r.final_round)
      return {false, fmt("mismatch on instance %d (K=%d, I0=%d)", t, k, h)};
    vectors += static_cast<long>(f.vectors.size());
    idle += f.idle_contacts;
  }
  return {true, fmt("1000 instances, %ld staleness vectors and %ld idle flags matched", vectors, idle)};
}

Outcome search_oracle(const utility::UtilityModel& model, const orbits::ConnectivitySets& trace, double t_hi) {
  constexpr int kH = 10, kLo = 2, kHi = 4, kInstances = 200;
  const auto candidates = sched::enumerate_band(kH, kLo, kHi);
  std::mt19937_64 rng(515);
  std::uniform_real_distribution<double> status(0.2 * t_hi, t_hi);
  sched::FedSpaceConfig cfg;
  cfg.horizon = kH;
  cfg.n_min = kLo;
  cfg.n_max = kHi;
  cfg.trials = 500;
  int exact = 0, close = 0;
  double worst = 1.0;
  for (int t = 0; t < kInstances; ++t) {
    auto world = testing::make_world(trace.num_satellites);
    sched::FedBuffScheduler fb(1 + static_cast<int>(rng() % 8));
    const auto start = static_cast<std::int64_t>(rng() % trace.horizon());
    const int warm = static_cast<int>(rng() % 96);
    for (int i = 0; i < warm; ++i) fl::server_step(world.server, trace.at(start + i), world.sats, fb, world.trainer, {});
    const auto window = sched::window_slice(trace, start + warm, kH);
    const auto snap = sched::ForecastSnapshot::capture(world.server, world.sats);
    const double T = status(rng);

    // Exhaustive reference with its own tie-break: value, then fewer ones, then smaller bits.
    double best_v = -kInf;
    std::vector<std::uint8_t> best_bits;
    int best_n = 0;
    for (std::uint32_t mask = 0; mask < (1u << kH); ++mask) {
      const int n = std::popcount(mask);
      if (n < kLo || n > kHi) continue;
      std::vector<std::uint8_t> bits(kH);
      for (int j = 0; j < kH; ++j) bits[static_cast<std::size_t>(j)] = (mask >> j) & 1u;
      const double v = sched::schedule_value({bits, 0}, window, snap, T, model, cfg.s_max);
      const bool better = v > best_v || (v == best_v && (n < best_n || (n == best_n && bits < best_bits)));
      if (best_bits.empty() || better) {
        best_v = v;
        best_bits = bits;
        best_n = n;
      }
    }
    const auto full = sched::search_candidates(model, window, snap, T, cfg.s_max, candidates);
    if (full.value == best_v && full.schedule.bits == best_bits) ++exact;

    Rng search_rng(derive_seed(77, {static_cast<std::uint64_t>(t)}));
    const auto rs = sched::random_search(model, window, snap, T, cfg, 0, search_rng);
    const double ratio = best_v > 0 ? rs.value / best_v : (rs.value >= best_v ? 1.0 : 0.0);
    worst = std::min(worst, ratio);
    if (rs.value >= best_v - 0.05 * std::abs(best_v)) ++close;
  }
  const bool ok = exact == kInstances && close >= static_cast<int>(std::ceil(0.95 * kInstances));
  return {ok, fmt("full enumeration exact on %d/%d; 500 trials within 95%% on %d/%d (worst ratio %.3f)", exact,
                  kInstances, close, kInstances, worst)};
}

Outcome gradient_check(const sim::Environment& env) {
  const auto& m = env.model;
  std::mt19937_64 rng(66);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<std::size_t> batch(64);
  std::uniform_int_distribution<std::size_t> pick(0, env.train.size() - 1);
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    for (auto& b : batch) b = pick(rng);
    ModelParams w(m.num_params());
    for (auto& v : w.values) v = g(rng);
    std::vector<double> dir(m.num_params());
    double norm = 0.0;
    for (auto& v : dir) {
      v = g(rng);
      norm += v * v;
    }
    for (auto& v : dir) v /= std::sqrt(norm);
    std::vector<double> grad(m.num_params());
    learn::loss_and_grad(m, w, env.train, batch, grad);
    double analytic = 0.0;
    for (std::size_t j = 0; j < dir.size(); ++j) analytic += grad[j] * dir[j];
    const double h = 1e-5;
    auto wp = w, wm = w;
    for (std::size_t j = 0; j < dir.size(); ++j) {
      wp.values[j] += h * dir[j];
      wm.values[j] -= h * dir[j];
    }
    const double fd = (learn::mean_loss(m, wp, env.train, batch) - learn::mean_loss(m, wm, env.train, batch)) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max(std::abs(fd), std::abs(analytic)));
  }
  return {worst <= 1e-5, fmt("100 directional probes, worst relative error %.2e", worst)};
}

Outcome aggregation_algebra() {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> sd(0, 50), nd(1, 64);
  std::uniform_real_distribution<double> ad(0.0, 3.0);
  double worst_sum = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<fl::BufferEntry> buf;
    const int n = nd(rng);
    for (int j = 0; j < n; ++j) buf.push_back({{{0.0}, 0}, sd(rng), j});
    const auto w = fl::aggregation_weights(buf, ad(rng));
    double s = 0.0;
    for (double v : w) s += v;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  }
  if (worst_sum > 1e-12) return {false, fmt("weights sum off by %.2e", worst_sum)};
  for (double alpha : {0.0, 0.5, 1.0, 2.0})
    if (fl::staleness_weight(0, alpha) != 1.0) return {false, "c(0) != 1"};
  for (double alpha : {0.01, 0.5, 1.0, 3.0})
    for (int s = 0; s < 200; ++s)
      if (!(fl::staleness_weight(s + 1, alpha) < fl::staleness_weight(s, alpha)))
        return {false, fmt("c not strictly decreasing at alpha=%.2f s=%d", alpha, s)};
  std::normal_distribution<double> g(0.0, 5.0);
  double worst_cancel = 0.0;
  for (int t = 0; t < 100; ++t) {
    ModelParams model(330);
    std::vector<double> d(330), neg(330);
    for (auto& v : model.values) v = g(rng);
    for (std::size_t j = 0; j < d.size(); ++j) neg[j] = -(d[j] = g(rng));
    const int s = sd(rng);
    const auto out = fl::aggregate(model, std::vector<fl::BufferEntry>{{{d, 0}, s, 0}, {{neg, 0}, s, 1}}, ad(rng));
    for (std::size_t j = 0; j < d.size(); ++j) worst_cancel = std::max(worst_cancel, std::abs(out.values[j] - model.values[j]));
  }
  return {worst_cancel <= 1e-12,
          fmt("weight sums within %.1e, {g,-g} drift %.1e", worst_sum, worst_cancel)};
}

Outcome ordering(const sim::SimConfig& cfg, const sim::Environment& env,
                 std::shared_ptr<const utility::UtilityModel> regressor) {
  const double ceiling = sim::centralized_ceiling(env);
  const double target = 0.9 * ceiling;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  auto median_days = [&](const std::string& kind, int m) {
    std::vector<double> t;
    for (auto seed : seeds) {
      auto c = cfg;
      c.scheduler.kind = kind;
      c.scheduler.buffer_size = m;
      c.target_accuracy = target;
      c.seed = seed;
      const auto r = sim::run(c, env, kind == "fedspace" ? regressor : nullptr);
      t.push_back(r.time_to_target_days.value_or(kInf));
    }
    return median(t);
  };
  const double sync = median_days("sync", 1);
  const double async = median_days("async", 1);
  double best_fb = kInf;
  int best_m = 0;
  std::string grid;
  for (int m : {2, 4, 8, 16, 32}) {
    const double d = median_days("fedbuff", m);
    grid += fmt(" M%d=%s", m, days(d).c_str());
    if (d < best_fb) {
      best_fb = d;
      best_m = m;
    }
  }
  const double fedspace = median_days("fedspace", 1);
  const double speedup = sync / fedspace;
  const bool ok = fedspace <= best_fb && best_fb <= sync && speedup >= 3.0 && (std::isinf(async) || async >= best_fb);
  return {ok, fmt("target %.4f (ceiling %.4f); median days: fedspace %s, fedbuff best M%d %s [%s ], sync %s, async %s; "
                  "sync/fedspace %.1fx",
                  target, ceiling, days(fedspace).c_str(), best_m, days(best_fb).c_str(), grid.c_str() + 1,
                  days(sync).c_str(), days(async).c_str(), speedup)};
}

Outcome regressor_quality(const sim::FitReport& fit) {
  const auto& r = fit.regressor;
  const bool ok = r.holdout_mse() < r.holdout_variance() && fit.mean_fresh_delta_f > fit.mean_stale_delta_f;
  return {ok, fmt("holdout mse %.3e vs variance %.3e; mean delta_f fresh %.3e vs s_max %.3e over %zu samples",
                  r.holdout_mse(), r.holdout_variance(), fit.mean_fresh_delta_f, fit.mean_stale_delta_f,
                  fit.samples.size())};
}

Outcome determinism(const sim::SimConfig& cfg, const sim::Environment& env) {
  const auto root = fs::temp_directory_path() / "fedspace_acceptance_determinism";
  fs::remove_all(root);
  const auto short_cfg = with(cfg, {"max_days=5"});
  const auto fit_a = sim::fit_utility(short_cfg, env);
  const auto fit_b = sim::fit_utility(short_cfg, env);
  if (fit_a.regressor.to_json().dump() != fit_b.regressor.to_json().dump()) return {false, "regressor fits differ"};
  auto reg_a = std::make_shared<utility::UtilityRegressor>(fit_a.regressor);
  auto reg_b = std::make_shared<utility::UtilityRegressor>(fit_b.regressor);
  int files = 0;
  for (const std::string kind : {"sync", "async", "fedbuff", "fedspace"}) {
    auto c = short_cfg;
    c.scheduler.kind = kind;
    c.seed = 3;
    sim::write_metrics(sim::run(c, env, kind == "fedspace" ? reg_a : nullptr), root / "a");
    sim::write_metrics(sim::run(c, env, kind == "fedspace" ? reg_b : nullptr), root / "b");
  }
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto other = root / "b" / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other))
      return {false, "differs: " + entry.path().filename().string()};
    ++files;
  }
  fs::remove_all(root);
  return {files == 8, fmt("%d metrics files byte-identical across repeated runs", files)};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const auto cfg = reference_config();
  const auto env = sim::prepare_environment(cfg);
  std::printf("reference: K=%d, horizon %zu indices, run length %.0f days (%.1f s setup)\n", env.trace.num_satellites,
              env.trace.horizon(), cfg.max_days, seconds_since(t0));

  const auto fit_start = Clock::now();
  const auto fit = sim::fit_utility(cfg, env);
  const double fit_seconds = seconds_since(fit_start);
  const auto regressor = std::make_shared<utility::UtilityRegressor>(fit.regressor);
  std::printf("utility regressor fitted in %.1f s\n", fit_seconds);

  report(1, "indicator truth tables", 1.0, indicators);
  report(2, "synchronous purity and idleness", 60.0, [&] { return sync_purity(cfg, env); });
  report(3, "asynchronous zero idleness", 0.0, [&] { return async_idleness(cfg, env); });
  report(4, "forecast vs replay", 60.0, forecast_oracle);
  report(5, "search vs exhaustive", 120.0, [&] {
    return search_oracle(*regressor, env.trace, learn::mean_loss(env.model, env.model.zeros(), env.probe));
  });
  report(6, "gradient correctness", 0.0, [&] { return gradient_check(env); });
  report(7, "aggregation algebra", 0.0, aggregation_algebra);
  report(8, "end-to-end ordering", 900.0 - fit_seconds, [&] { return ordering(cfg, env, regressor); });
  report(9, "utility regressor", 0.0, [&] { return regressor_quality(fit); });
  report(10, "determinism", 0.0, [&] { return determinism(cfg, env); });

  std::printf("%d of 10 criteria failed; total %.1f s\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
