#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "moedr/rng.hpp"

namespace moedr {

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline std::vector<double> glorot_uniform(RngStream& rng, std::int64_t count,
                                          double fan_in, double fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> v(static_cast<std::size_t>(count));
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return v;
}

}  // namespace moedr
