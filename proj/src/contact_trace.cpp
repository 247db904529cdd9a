#include "fedspace/contact_trace.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>

namespace fedspace::orbits {
namespace {

constexpr std::string_view kHeader = "time_index,satellite_id";

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// "# horizon=480 satellites=48 t0_seconds=900"
void parse_meta(std::string_view line, std::size_t lineno, long& horizon, long& sats, double& t0) {
  line.remove_prefix(1);
  bool have_h = false, have_k = false, have_t = false;
  std::istringstream words{std::string(line)};
  std::string w;
  while (words >> w) {
    const auto eq = w.find('=');
    if (eq == std::string::npos) throw TraceParseError(lineno, "malformed metadata token '" + w + "'");
    const std::string_view key(w.data(), eq);
    const std::string_view val(w.data() + eq + 1, w.size() - eq - 1);
    bool ok = false;
    if (key == "horizon") {
      ok = parse_number(val, horizon) && horizon >= 0;
      have_h = true;
    } else if (key == "satellites") {
      ok = parse_number(val, sats) && sats >= 0;
      have_k = true;
    } else if (key == "t0_seconds") {
      ok = parse_number(val, t0) && t0 > 0.0;
      have_t = true;
    } else {
      throw TraceParseError(lineno, "unknown metadata key '" + std::string(key) + "'");
    }
    if (!ok) throw TraceParseError(lineno, "bad value for '" + std::string(key) + "'");
  }
  if (!have_h || !have_k || !have_t)
    throw TraceParseError(lineno, "metadata must declare horizon, satellites and t0_seconds");
}

}  // namespace

ConnectivitySets read_contact_trace(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  long horizon = -1, sats = -1;
  double t0 = 0.0;

  if (!std::getline(in, line)) throw TraceParseError(1, "missing metadata line");
  ++lineno;
  if (!line.empty() && line.back() == '\r') throw TraceParseError(lineno, "CRLF line endings are not accepted");
  if (line.empty() || line[0] != '#') throw TraceParseError(lineno, "expected '# horizon=... satellites=... t0_seconds=...'");
  parse_meta(line, lineno, horizon, sats, t0);

  if (!std::getline(in, line) || line != kHeader)
    throw TraceParseError(lineno + 1, "expected header '" + std::string(kHeader) + "'");
  ++lineno;

  ConnectivitySets out;
  out.t0_seconds = t0;
  out.num_satellites = static_cast<int>(sats);
  out.sets.resize(static_cast<std::size_t>(horizon));

  long prev_i = -1, prev_k = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) throw TraceParseError(lineno, "empty row");
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw TraceParseError(lineno, "expected two comma-separated integers");
    long i = 0, k = 0;
    if (!parse_number(std::string_view(line).substr(0, comma), i) ||
        !parse_number(std::string_view(line).substr(comma + 1), k))
      throw TraceParseError(lineno, "non-integer field");
    if (i < 0 || i >= horizon) throw TraceParseError(lineno, "time_index outside declared horizon");
    if (k < 0 || k >= sats) throw TraceParseError(lineno, "satellite_id outside declared range");
    if (i == prev_i && k == prev_k) throw TraceParseError(lineno, "duplicate (time_index, satellite_id) row");
    if (i < prev_i || (i == prev_i && k < prev_k)) throw TraceParseError(lineno, "rows not sorted by (time_index, satellite_id)");
    out.sets[static_cast<std::size_t>(i)].push_back(static_cast<int>(k));
    prev_i = i;
    prev_k = k;
  }
  return out;
}

void write_contact_trace(const ConnectivitySets& sets, std::ostream& out) {
  sets.validate();
  out << "# horizon=" << sets.horizon() << " satellites=" << sets.num_satellites
      << " t0_seconds=" << format_double(sets.t0_seconds) << '\n';
  out << kHeader << '\n';
  for (std::size_t i = 0; i < sets.sets.size(); ++i)
    for (int k : sets.sets[i]) out << i << ',' << k << '\n';
}

ConnectivitySets load_contact_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open contact trace " + path.string());
  return read_contact_trace(in);
}

void save_contact_trace(const ConnectivitySets& sets, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write contact trace " + path.string());
  write_contact_trace(sets, out);
  if (!out) throw std::runtime_error("failed writing contact trace " + path.string());
}

}  // namespace fedspace::orbits
