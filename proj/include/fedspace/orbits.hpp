#pragma once

// Two-body circular propagation, rotating spherical Earth, and the
// elevation-mask connectivity sets derived from them.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedspace::orbits {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr double kEarthMu = 3.986004418e14;       // m^3 / s^2
inline constexpr double kEarthRotationRate = 7.2921159e-5;  // rad / s
inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg2rad(double deg) noexcept { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) noexcept { return rad * 180.0 / kPi; }

struct OrbitalElements {
  double semi_major_axis_m = 0.0;
  double inclination_rad = 0.0;
  double raan_rad = 0.0;
  double phase_rad = 0.0;  // argument of latitude at t = 0

  void validate() const;
  double mean_motion() const;  // rad / s
  double period_seconds() const;
};

struct GroundStation {
  std::string name;
  double latitude_rad = 0.0;
  double longitude_rad = 0.0;
  double altitude_m = 0.0;

  void validate() const;
};

struct EciPosition {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double t = 0.0;

  double norm() const noexcept;
};

EciPosition propagate_satellite(const OrbitalElements& elements, double t);
EciPosition ground_station_position(const GroundStation& gs, double t);

// Angle between the station's zenith direction and the line of sight to the
// satellite. A link is feasible iff this is <= pi/2 - alpha_min.
double zenith_angle(const EciPosition& sat, const EciPosition& gs);
bool elevation_feasible(const EciPosition& sat, const EciPosition& gs, double alpha_min_rad);

/// Time-indexed membership of satellites in the ground-station link set.
/// `sets[i]` is strictly increasing and holds ids in [0, num_satellites).
struct ConnectivitySets {
  std::vector<std::vector<int>> sets;
  double t0_seconds = 900.0;
  int num_satellites = 0;

  std::size_t horizon() const noexcept { return sets.size(); }
  // Cyclic access, used when a run is longer than the trace.
  const std::vector<int>& at(std::int64_t i) const;
  void validate() const;

  bool operator==(const ConnectivitySets&) const = default;
};

struct ConnectivityParams {
  double alpha_min_rad = deg2rad(5.0);
  double t0_seconds = 900.0;
  int horizon = 480;
  double substep_seconds = 60.0;
};

ConnectivitySets compute_connectivity(std::span<const OrbitalElements> constellation,
                                      std::span<const GroundStation> stations,
                                      const ConnectivityParams& params);

struct ConnectivityStats {
  std::vector<int> per_index;      // |C_i|
  std::vector<int> per_satellite;  // n_k
};

ConnectivityStats connectivity_stats(const ConnectivitySets& sets);

// Walker-style constellation. Altitudes and inclinations are cycled per plane,
// which yields heterogeneous per-satellite visit counts.
struct ConstellationSpec {
  int planes = 6;
  int sats_per_plane = 8;
  std::vector<double> altitudes_m{1'000'000.0, 1'200'000.0, 1'400'000.0, 1'600'000.0};
  std::vector<double> inclinations_deg{97.4, 53.0};
  double raan_spread_rad = kPi;
  int phasing = 1;

  void validate() const;
};

std::vector<OrbitalElements> walker_constellation(const ConstellationSpec& spec);

// Twelve stations at mixed latitudes, polar-heavy like commercial EO networks.
std::vector<GroundStation> reference_stations();

// Number of entries of each satellite's sub-satellite point into each of
// `zones` equal-width latitude bands over [0, duration_seconds). Result is
// indexed [satellite][zone].
std::vector<std::vector<int>> latitude_band_visits(std::span<const OrbitalElements> constellation,
                                                   int zones, double duration_seconds,
                                                   double step_seconds = 60.0);

}  // namespace fedspace::orbits
