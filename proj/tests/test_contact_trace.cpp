#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "fedspace/contact_trace.hpp"

using namespace fedspace::orbits;

namespace {

ConnectivitySets parse(const std::string& text) {
  std::istringstream in(text);
  return read_contact_trace(in);
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const TraceParseError& e) {
    return e.line();
  }
  return 0;
}

const std::string kHead = "# horizon=4 satellites=3 t0_seconds=900\ntime_index,satellite_id\n";

}  // namespace

TEST_CASE("trace with an empty body has empty sets") {
  const auto c = parse(kHead);
  CHECK(c.horizon() == 4);
  CHECK(c.num_satellites == 3);
  CHECK(c.t0_seconds == 900.0);
  for (const auto& s : c.sets) CHECK(s.empty());
}

TEST_CASE("trace rows fill the declared sets") {
  const auto c = parse(kHead + "0,0\n0,2\n3,1\n");
  CHECK(c.sets[0] == std::vector<int>{0, 2});
  CHECK(c.sets[1].empty());
  CHECK(c.sets[3] == std::vector<int>{1});
}

TEST_CASE("malformed traces report the offending line") {
  CHECK(error_line(kHead + "0,2\n0,1\n") == 4);
  CHECK(error_line(kHead + "1,0\n0,1\n") == 4);
  CHECK(error_line(kHead + "0,1\n0,1\n") == 4);
  CHECK(error_line(kHead + "4,0\n") == 3);
  CHECK(error_line(kHead + "0,3\n") == 3);
  CHECK(error_line(kHead + "0,-1\n") == 3);
  CHECK(error_line(kHead + "0;1\n") == 3);
  CHECK(error_line(kHead + "0,1,2\n") == 3);
  CHECK(error_line(kHead + "a,1\n") == 3);
  CHECK(error_line(kHead + "0,1\n\n") == 4);
  CHECK(error_line("# horizon=4 satellites=3 t0_seconds=900\r\ntime_index,satellite_id\n") == 1);
  CHECK(error_line("# horizon=4 satellites=3\ntime_index,satellite_id\n") == 1);
  CHECK(error_line("# horizon=4 satellites=3 t0_seconds=0\ntime_index,satellite_id\n") == 1);
  CHECK(error_line("# horizon=4 satellites=3 t0_seconds=900 colour=red\ntime_index,satellite_id\n") == 1);
  CHECK(error_line("time_index,satellite_id\n") == 1);
  CHECK(error_line("# horizon=4 satellites=3 t0_seconds=900\nindex,sat\n") == 2);
  CHECK(error_line("") == 1);
}

TEST_CASE("trace round trip through a file") {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution coin(0.15);
  ConnectivitySets c;
  c.num_satellites = 20;
  c.t0_seconds = 450.5;
  c.sets.resize(96);
  for (auto& s : c.sets)
    for (int k = 0; k < 20; ++k)
      if (coin(rng)) s.push_back(k);

  const auto path = std::filesystem::temp_directory_path() / "fedspace_trace_roundtrip.csv";
  save_contact_trace(c, path);
  const auto back = load_contact_trace(path);
  std::filesystem::remove(path);
  CHECK(back == c);

  std::ostringstream a, b;
  write_contact_trace(c, a);
  write_contact_trace(back, b);
  CHECK(a.str() == b.str());
}

TEST_CASE("loading a missing trace file fails") {
  CHECK_THROWS_AS(load_contact_trace("/nonexistent/trace.csv"), std::runtime_error);
}
