#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace fedspace {

/// Dense parameter vector of the global or a local model.
struct ModelParams {
  std::vector<double> values;

  ModelParams() = default;
  explicit ModelParams(std::size_t dim, double fill = 0.0) : values(dim, fill) {}
  explicit ModelParams(std::vector<double> v) : values(std::move(v)) {}

  std::size_t dim() const noexcept { return values.size(); }
  std::span<const double> view() const noexcept { return values; }
  bool all_finite() const noexcept {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
  bool operator==(const ModelParams&) const = default;
};

}  // namespace fedspace
