#include "gridshed/scenario.hpp"

#include <random>

#include "gridshed/errors.hpp"
#include "gridshed/power_flow.hpp"
#include "gridshed/util.hpp"

namespace gridshed {

OperatingPoint apply_scales(const Network& base, const std::vector<double>& gen_scale,
                            const std::vector<double>& load_scale) {
  if (gen_scale.size() != base.generators.size() || load_scale.size() != base.loads.size())
    throw InvalidInput("scale vectors do not match the case");
  OperatingPoint op{gen_scale, load_scale, base};
  const int slack = base.slack_bus();
  for (size_t g = 0; g < op.solved.generators.size(); ++g) {
    auto& gen = op.solved.generators[g];
    if (gen.bus != slack) gen.p_mech *= gen_scale[g];
  }
  for (size_t l = 0; l < op.solved.loads.size(); ++l) {
    op.solved.loads[l].p_load *= load_scale[l];
    op.solved.loads[l].q_load *= load_scale[l];
  }
  op.solved = solved(std::move(op.solved));
  return op;
}

OperatingPoint sample_operating_point(const Network& base, std::uint64_t seed,
                                      const ScaleRanges& ranges, int max_attempts) {
  Rng rng(seed);
  std::uniform_real_distribution<double> ug(ranges.gen_lo, ranges.gen_hi);
  std::uniform_real_distribution<double> ul(ranges.load_lo, ranges.load_hi);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<double> gs(base.generators.size()), ls(base.loads.size());
    for (auto& s : gs) s = ug(rng);
    for (auto& s : ls) s = ul(rng);
    try {
      return apply_scales(base, gs, ls);
    } catch (const DivergedCase&) {
    }
  }
  throw DivergedCase("no convergent operating point after " + std::to_string(max_attempts) +
                         " draws",
                     max_attempts);
}

std::vector<double> bus_features(const Network& net) {
  std::vector<double> row;
  row.reserve(4 * net.buses.size());
  for (const auto& b : net.buses) {
    row.push_back(b.voltage_mag);
    row.push_back(b.voltage_ang);
    row.push_back(b.p_net);
    row.push_back(b.q_net);
  }
  return row;
}

}  // namespace gridshed
