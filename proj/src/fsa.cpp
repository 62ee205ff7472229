#include "gridshed/fsa.hpp"

#include <algorithm>
#include <limits>

namespace gridshed {

bool frequency_safe(double f_min, double f_max, const FsaThresholds& th) {
  return f_min > th.f_low && f_max < th.f_high;
}

int FsaVerdict::binding(const FsaThresholds& th) const {
  int best = -1;
  double worst = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < per_contingency.size(); ++k) {
    const auto& e = per_contingency[k];
    const double margin = std::min(e.f_min - th.f_low, th.f_high - e.f_max);
    if (margin < worst) {
      worst = margin;
      best = static_cast<int>(k);
    }
  }
  return best;
}

FsaVerdict run_fsa_tds(const DynamicModel& model, const std::vector<Contingency>& set,
                       const FsaThresholds& th, const SimOptions& opts) {
  SimOptions sim = opts;
  sim.record_stride = std::max(sim.record_stride, 1 << 20);  // extrema only
  FsaVerdict v;
  v.per_contingency.reserve(set.size());
  for (const auto& c : set) {
    const TrajectoryRecord traj = integrate_swing(model, c, sim);
    v.per_contingency.push_back({c.id, traj.nadir, traj.peak, traj.unstable});
    if (!frequency_safe(traj.nadir, traj.peak, th)) v.safe = false;
  }
  return v;
}

FsaVerdict run_fsa_tds(const Network& solved_net, const std::vector<Contingency>& set,
                       const FsaThresholds& th, const SimOptions& opts) {
  if (set.empty()) return {};
  return run_fsa_tds(DynamicModel::from_solved(solved_net), set, th, opts);
}

}  // namespace gridshed
