#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ldcd {

/// A univariate series. Timestamps are opaque ordered keys; all windowing is
/// done in row-index space.
struct TimeSeries {
  std::string name;
  std::vector<std::string> timestamps;
  std::vector<double> values;
  std::vector<std::size_t> labels;  // anomaly row indices, ascending

  std::size_t size() const noexcept { return values.size(); }
};

inline constexpr double kProbationFraction = 0.15;

/// Rows reserved for warm-up: floor(fraction * length).
inline std::size_t probation_length(std::size_t length, double fraction = kProbationFraction) {
  return static_cast<std::size_t>(fraction * static_cast<double>(length));
}

}  // namespace ldcd
