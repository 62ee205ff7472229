#pragma once

#include <cstdint>
#include <vector>

#include "gridshed/network.hpp"

namespace gridshed {

struct ScaleRanges {
  double gen_lo = 0.7, gen_hi = 1.2;
  double load_lo = 0.9, load_hi = 1.5;
};

/// A sampled dispatch/load pattern together with its power-flow solution.
struct OperatingPoint {
  std::vector<double> gen_scale;   // per generator
  std::vector<double> load_scale;  // per load record
  Network solved;
};

/// Scales generator dispatch and loads (constant power factor) of `base`,
/// then re-solves the power flow; the slack machine absorbs the mismatch.
OperatingPoint apply_scales(const Network& base, const std::vector<double>& gen_scale,
                            const std::vector<double>& load_scale);

/// Draws independent uniform scales until the power flow converges.
/// Throws DivergedCase after `max_attempts` failures.
OperatingPoint sample_operating_point(const Network& base, std::uint64_t seed,
                                      const ScaleRanges& ranges = {}, int max_attempts = 20);

/// Row of 4N pre-contingency features, bus-major: (v, delta, p, q) per bus.
std::vector<double> bus_features(const Network& solved);

}  // namespace gridshed
