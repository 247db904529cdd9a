#include "fedspace/orbits.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedspace::orbits {

void OrbitalElements::validate() const {
  if (!std::isfinite(semi_major_axis_m) || semi_major_axis_m <= kEarthRadiusM)
    throw std::invalid_argument("orbit: semi-major axis must exceed the Earth radius");
  if (!std::isfinite(inclination_rad) || !std::isfinite(raan_rad) || !std::isfinite(phase_rad))
    throw std::invalid_argument("orbit: angles must be finite");
}

double OrbitalElements::mean_motion() const {
  return std::sqrt(kEarthMu / (semi_major_axis_m * semi_major_axis_m * semi_major_axis_m));
}

double OrbitalElements::period_seconds() const { return 2.0 * kPi / mean_motion(); }

void GroundStation::validate() const {
  if (!(latitude_rad >= -kPi / 2 && latitude_rad <= kPi / 2))
    throw std::invalid_argument("ground station: latitude out of [-pi/2, pi/2]");
  if (!(longitude_rad >= -kPi && longitude_rad < kPi))
    throw std::invalid_argument("ground station: longitude out of [-pi, pi)");
  if (!(altitude_m >= 0.0) || !std::isfinite(altitude_m))
    throw std::invalid_argument("ground station: altitude must be >= 0");
}

double EciPosition::norm() const noexcept { return std::sqrt(x * x + y * y + z * z); }

EciPosition propagate_satellite(const OrbitalElements& el, double t) {
  el.validate();
  if (!(t >= 0.0)) throw std::invalid_argument("propagate_satellite: t must be >= 0");
  const double u = el.phase_rad + el.mean_motion() * t;
  const double a = el.semi_major_axis_m;
  const double cu = std::cos(u), su = std::sin(u);
  const double ci = std::cos(el.inclination_rad), si = std::sin(el.inclination_rad);
  const double co = std::cos(el.raan_rad), so = std::sin(el.raan_rad);
  return {a * (cu * co - su * ci * so), a * (cu * so + su * ci * co), a * su * si, t};
}

EciPosition ground_station_position(const GroundStation& gs, double t) {
  const double r = kEarthRadiusM + gs.altitude_m;
  const double theta = gs.longitude_rad + kEarthRotationRate * t;
  const double cl = std::cos(gs.latitude_rad);
  return {r * cl * std::cos(theta), r * cl * std::sin(theta), r * std::sin(gs.latitude_rad), t};
}

double zenith_angle(const EciPosition& sat, const EciPosition& gs) {
  const double gn = gs.norm();
  if (gn == 0.0) throw std::invalid_argument("zenith_angle: station at Earth center");
  const double dx = sat.x - gs.x, dy = sat.y - gs.y, dz = sat.z - gs.z;
  const double dn = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (dn == 0.0) throw std::invalid_argument("zenith_angle: satellite coincides with station");
  double c = (gs.x * dx + gs.y * dy + gs.z * dz) / (gn * dn);
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

bool elevation_feasible(const EciPosition& sat, const EciPosition& gs, double alpha_min_rad) {
  return zenith_angle(sat, gs) <= kPi / 2 - alpha_min_rad;
}

const std::vector<int>& ConnectivitySets::at(std::int64_t i) const {
  if (sets.empty()) throw std::out_of_range("connectivity sets are empty");
  const auto h = static_cast<std::int64_t>(sets.size());
  return sets[static_cast<std::size_t>(((i % h) + h) % h)];
}

void ConnectivitySets::validate() const {
  if (num_satellites < 0) throw std::invalid_argument("connectivity: negative satellite count");
  if (!(t0_seconds > 0.0)) throw std::invalid_argument("connectivity: t0 must be positive");
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& s = sets[i];
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] < 0 || s[j] >= num_satellites)
        throw std::invalid_argument("connectivity: satellite id out of range at index " +
                                    std::to_string(i));
      if (j > 0 && s[j] <= s[j - 1])
        throw std::invalid_argument("connectivity: set not strictly sorted at index " +
                                    std::to_string(i));
    }
  }
}

ConnectivitySets compute_connectivity(std::span<const OrbitalElements> constellation,
                                      std::span<const GroundStation> stations,
                                      const ConnectivityParams& params) {
  if (constellation.empty()) throw std::invalid_argument("compute_connectivity: empty constellation");
  if (stations.empty()) throw std::invalid_argument("compute_connectivity: no ground stations");
  if (params.horizon < 1) throw std::invalid_argument("compute_connectivity: horizon must be >= 1");
  if (!(params.substep_seconds > 0.0) || params.substep_seconds > params.t0_seconds)
    throw std::invalid_argument("compute_connectivity: need 0 < substep <= t0");
  for (const auto& el : constellation) el.validate();
  for (const auto& gs : stations) gs.validate();

  const double threshold = kPi / 2 - params.alpha_min_rad;
  std::vector<double> offsets;
  for (int j = 0;; ++j) {
    const double off = j * params.substep_seconds;
    if (off >= params.t0_seconds) break;
    offsets.push_back(off);
  }

  const std::size_t n_sats = constellation.size();
  const std::size_t n_gs = stations.size();
  ConnectivitySets out;
  out.t0_seconds = params.t0_seconds;
  out.num_satellites = static_cast<int>(n_sats);
  out.sets.resize(static_cast<std::size_t>(params.horizon));

  std::vector<EciPosition> gs_pos(n_gs * offsets.size());
  std::vector<EciPosition> sat_pos(offsets.size());
  for (int i = 0; i < params.horizon; ++i) {
    const double t_start = i * params.t0_seconds;
    for (std::size_t j = 0; j < offsets.size(); ++j)
      for (std::size_t g = 0; g < n_gs; ++g)
        gs_pos[g * offsets.size() + j] = ground_station_position(stations[g], t_start + offsets[j]);

    auto& set = out.sets[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < n_sats; ++k) {
      for (std::size_t j = 0; j < offsets.size(); ++j)
        sat_pos[j] = propagate_satellite(constellation[k], t_start + offsets[j]);
      bool linked = false;
      for (std::size_t g = 0; g < n_gs && !linked; ++g) {
        bool all = true;
        for (std::size_t j = 0; j < offsets.size() && all; ++j)
          all = zenith_angle(sat_pos[j], gs_pos[g * offsets.size() + j]) <= threshold;
        linked = all;
      }
      if (linked) set.push_back(static_cast<int>(k));
    }
  }
  return out;
}

ConnectivityStats connectivity_stats(const ConnectivitySets& sets) {
  ConnectivityStats st;
  st.per_index.reserve(sets.horizon());
  st.per_satellite.assign(static_cast<std::size_t>(sets.num_satellites), 0);
  for (const auto& s : sets.sets) {
    st.per_index.push_back(static_cast<int>(s.size()));
    for (int k : s) ++st.per_satellite.at(static_cast<std::size_t>(k));
  }
  return st;
}

void ConstellationSpec::validate() const {
  if (planes < 1 || sats_per_plane < 1)
    throw std::invalid_argument("constellation: planes and sats_per_plane must be >= 1");
  if (altitudes_m.empty() || inclinations_deg.empty())
    throw std::invalid_argument("constellation: altitude and inclination lists must be non-empty");
  for (double alt : altitudes_m)
    if (!(alt > 0.0)) throw std::invalid_argument("constellation: altitude must be positive");
}

std::vector<OrbitalElements> walker_constellation(const ConstellationSpec& spec) {
  spec.validate();
  std::vector<OrbitalElements> out;
  out.reserve(static_cast<std::size_t>(spec.planes * spec.sats_per_plane));
  const int total = spec.planes * spec.sats_per_plane;
  for (int p = 0; p < spec.planes; ++p) {
    const double alt = spec.altitudes_m[static_cast<std::size_t>(p) % spec.altitudes_m.size()];
    const double inc = spec.inclinations_deg[static_cast<std::size_t>(p) % spec.inclinations_deg.size()];
    const double raan = spec.raan_spread_rad * p / spec.planes;
    for (int s = 0; s < spec.sats_per_plane; ++s) {
      const double phase = 2.0 * kPi * s / spec.sats_per_plane + 2.0 * kPi * spec.phasing * p / total;
      out.push_back({kEarthRadiusM + alt, deg2rad(inc), raan, phase});
    }
  }
  return out;
}

std::vector<GroundStation> reference_stations() {
  struct Site {
    const char* name;
    double lat, lon;
  };
  static constexpr Site sites[] = {
      {"svalbard", 78.2, 15.4},      {"tromso", 69.6, 18.9},      {"fairbanks", 64.8, -147.7},
      {"mcmurdo", -77.8, 166.7},     {"punta-arenas", -53.1, -70.9}, {"seattle", 47.6, -122.3},
      {"mountain-view", 37.4, -122.1}, {"berlin", 52.5, 13.4},      {"cape-town", -33.9, 18.4},
      {"singapore", 1.3, 103.8},     {"hartebeesthoek", -25.9, 28.2}, {"tokyo", 35.7, 139.7},
  };
  std::vector<GroundStation> out;
  for (const auto& s : sites) out.push_back({s.name, deg2rad(s.lat), deg2rad(s.lon), 0.0});
  return out;
}

std::vector<std::vector<int>> latitude_band_visits(std::span<const OrbitalElements> constellation,
                                                   int zones, double duration_seconds,
                                                   double step_seconds) {
  if (zones < 1) throw std::invalid_argument("latitude_band_visits: zones must be >= 1");
  if (!(step_seconds > 0.0)) throw std::invalid_argument("latitude_band_visits: step must be positive");
  auto band_of = [zones](const EciPosition& p) {
    const double lat = std::asin(std::clamp(p.z / p.norm(), -1.0, 1.0));
    int b = static_cast<int>(std::floor((lat + kPi / 2) / kPi * zones));
    return std::clamp(b, 0, zones - 1);
  };
  std::vector<std::vector<int>> visits(constellation.size(), std::vector<int>(static_cast<std::size_t>(zones), 0));
  for (std::size_t k = 0; k < constellation.size(); ++k) {
    int prev = -1;
    for (long j = 0; j * step_seconds < duration_seconds; ++j) {
      const int b = band_of(propagate_satellite(constellation[k], j * step_seconds));
      if (b != prev) ++visits[k][static_cast<std::size_t>(b)];
      prev = b;
    }
  }
  return visits;
}

}  // namespace fedspace::orbits
