#include <doctest.h>

#include <random>

#include "fedspace/schedulers.hpp"
#include "replay_oracle.hpp"

using namespace fedspace;
using namespace fedspace::sched;

namespace {

std::vector<int> subset(unsigned mask, int k) {
  std::vector<int> r;
  for (int i = 0; i < k; ++i)
    if (mask & (1u << i)) r.push_back(i);
  return r;
}

ForecastSnapshot fresh(int k) {
  ForecastSnapshot s;
  s.satellites.resize(static_cast<std::size_t>(k));
  return s;
}

}  // namespace

TEST_CASE("indicator truth tables for small constellations") {
  for (int k = 1; k <= 6; ++k) {
    for (unsigned mask = 0; mask < (1u << k); ++mask) {
      const auto r = subset(mask, k);
      const bool full = static_cast<int>(r.size()) == k;
      CHECK(sync_indicator(r, k) == full);
      CHECK(async_indicator(r) == !r.empty());
      for (int m = 1; m <= k; ++m) CHECK(fedbuff_indicator(r, m) == (static_cast<int>(r.size()) >= m));
      CHECK(fedbuff_indicator(r, 1) == async_indicator(r));
      CHECK(fedbuff_indicator(r, k) == sync_indicator(r, k));
    }
  }
  CHECK_FALSE(sync_indicator({}, 0));
  CHECK_THROWS(fedbuff_indicator({}, 0));
  CHECK_THROWS(FedBuffScheduler(0));
}

TEST_CASE("fixed scheduler serves bits relative to its start") {
  FixedScheduler f({1, 0, 1}, 10);
  fl::ServerState server;
  auto ask = [&](std::int64_t i) { return f.decide({i, {}, server, {}, 0, 0.0}); };
  CHECK_FALSE(ask(9));
  CHECK(ask(10));
  CHECK_FALSE(ask(11));
  CHECK(ask(12));
  CHECK_FALSE(ask(13));
  CHECK(ScheduleVector{{1, 0, 1, 1}, 0}.aggregations() == 3);
}

TEST_CASE("forecast of an all-zero schedule has no vectors") {
  const std::vector<std::vector<int>> w{{0, 1}, {1}, {1}};
  const auto f = forecast_staleness({{0, 0, 0}, 5}, w, fresh(2));
  CHECK(f.vectors.empty());
  CHECK(f.final_round == 0);
  CHECK(f.idle_contacts == 1);  // satellite 1 already uploaded at offset 1
  CHECK(f.idle[1].empty());
  CHECK(f.idle[2] == std::vector<int>{1});
}

TEST_CASE("forecast: one satellite, one stale upload") {
  ForecastSnapshot s = fresh(1);
  s.current_round = 4;
  s.satellites[0].base_round = 3;
  s.satellites[0].pending = true;
  const std::vector<std::vector<int>> w{{0}};
  const auto f = forecast_staleness({{1}, 0}, w, s);
  REQUIRE(f.vectors.size() == 1);
  CHECK(f.vectors[0].entries == std::vector<int>{1});
  CHECK(f.final_round == 5);
}

TEST_CASE("forecast: three satellites over five indices") {
  const std::vector<std::vector<int>> w{{0, 2}, {1}, {0}, {1}, {0, 2}};
  const ScheduleVector a{{0, 0, 1, 0, 1}, 0};
  const auto f = forecast_staleness(a, w, fresh(3));
  REQUIRE(f.vectors.size() == 2);
  CHECK(f.vectors[0].entries == std::vector<int>{0, -1, -1});
  CHECK(f.vectors[0].agg_index == 2);
  CHECK(f.vectors[1].entries == std::vector<int>{0, 1, 1});
  CHECK(f.vectors[1].agg_index == 4);
  CHECK(f.idle_contacts == 0);
  CHECK(f.final_round == 2);

  const auto r = testing::replay(testing::make_world(3), a.bits, w);
  CHECK(r.vectors == f.vectors);
  CHECK(r.idle == f.idle);
}

TEST_CASE("forecast matches replay on random instances with warm state") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> kd(1, 8), ld(1, 16), wd(0, 30), bd(1, 4);
  std::bernoulli_distribution bit(0.4);
  for (int t = 0; t < 150; ++t) {
    const int k = kd(rng);
    auto world = testing::make_world(k);
    testing::warm_up(world, wd(rng), bd(rng), rng);
    const int len = ld(rng);
    const auto window = testing::random_window(k, len, 0.4, rng);
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(len));
    for (auto& b : bits) b = bit(rng);
    const auto snap = ForecastSnapshot::capture(world.server, world.sats);
    const auto f = forecast_staleness({bits, world.server.time_index}, window, snap);
    const auto r = testing::replay(world, bits, window);
    CHECK(f.vectors == r.vectors);
    CHECK(f.idle == r.idle);
    CHECK(f.final_round == r.final_round);
  }
}

TEST_CASE("snapshot keeps the freshest buffered delta per satellite") {
  fl::ServerState server;
  server.round = 5;
  server.buffer.push_back({{{0.0}, 2}, 3, 1});
  server.buffer.push_back({{{0.0}, 4}, 1, 1});
  std::vector<fl::SatelliteState> sats(2);
  sats[1].base_round = 5;
  const auto s = ForecastSnapshot::capture(server, sats);
  CHECK_FALSE(s.satellites[0].buffered_base_round);
  CHECK(s.satellites[1].buffered_base_round == 4);
  CHECK(s.current_round == 5);
}

TEST_CASE("forecast argument errors") {
  const std::vector<std::vector<int>> w{{0}};
  CHECK_THROWS(forecast_staleness({{1, 0}, 0}, w, fresh(1)));
  const std::vector<std::vector<int>> bad{{3}};
  CHECK_THROWS(forecast_staleness({{1}, 0}, bad, fresh(1)));
  auto s = fresh(1);
  s.satellites[0].pending = true;
  CHECK_THROWS(forecast_staleness({{1}, 0}, w, s));
}

TEST_CASE("window slices wrap around the trace") {
  orbits::ConnectivitySets c;
  c.num_satellites = 3;
  c.sets = {{0}, {1}, {2}};
  const auto s = window_slice(c, 2, 4);
  CHECK(s == std::vector<std::vector<int>>{{2}, {0}, {1}, {2}});
}

TEST_CASE("featurize counts staleness bins") {
  const StalenessVector v{{-1, 1, 5}, 0};
  const auto f = featurize(v, 0.25, 5);
  CHECK(f.size() == feature_count(5));
  CHECK(f == std::vector<double>{1, 0, 1, 0, 0, 0, 1, 0.25});

  std::vector<int> e{-1, 0, 0, 3, 2, -1, 4};
  const auto base = featurize({e, 0}, 1.0, 4);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    std::shuffle(e.begin(), e.end(), rng);
    CHECK(featurize({e, 0}, 1.0, 4) == base);
  }
  CHECK_THROWS(featurize({{6}, 0}, 0.0, 5));
  CHECK_THROWS(featurize({{-2}, 0}, 0.0, 5));
  CHECK(clamp_staleness({{-1, 3, 9}, 0}, 4).entries == std::vector<int>{-1, 3, 4});
}
