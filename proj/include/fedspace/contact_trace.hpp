#pragma once

// Contact trace CSV:
//
//   # horizon=<H> satellites=<K> t0_seconds=<T>
//   time_index,satellite_id
//   0,3
//   0,17
//   ...
//
// Rows are sorted ascending by (time_index, satellite_id) with no duplicates.

#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "fedspace/orbits.hpp"

namespace fedspace::orbits {

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

ConnectivitySets read_contact_trace(std::istream& in);
void write_contact_trace(const ConnectivitySets& sets, std::ostream& out);

ConnectivitySets load_contact_trace(const std::filesystem::path& path);
void save_contact_trace(const ConnectivitySets& sets, const std::filesystem::path& path);

}  // namespace fedspace::orbits
