#pragma once

#include <vector>

#include "gridshed/contingency.hpp"
#include "gridshed/network.hpp"
#include "gridshed/swing.hpp"

namespace gridshed {

struct FsaThresholds {
  double f_low = 59.5;   // Hz, strict: f_min must exceed it
  double f_high = 60.5;  // Hz, strict: f_max must stay below it
};

struct ContingencyExtrema {
  int id = 0;
  double f_min = 0.0;
  double f_max = 0.0;
  bool unstable = false;
};

struct FsaVerdict {
  bool safe = true;
  std::vector<ContingencyExtrema> per_contingency;

  /// Index into per_contingency of the entry with the smallest margin to
  /// either threshold; -1 when the list is empty.
  int binding(const FsaThresholds& th = {}) const;
};

bool frequency_safe(double f_min, double f_max, const FsaThresholds& th = {});

/// Ground-truth assessment: one time-domain simulation per contingency.
/// `solved_net` must carry a converged power flow.
FsaVerdict run_fsa_tds(const Network& solved_net, const std::vector<Contingency>& set,
                       const FsaThresholds& th = {}, const SimOptions& opts = {});
FsaVerdict run_fsa_tds(const DynamicModel& model, const std::vector<Contingency>& set,
                       const FsaThresholds& th = {}, const SimOptions& opts = {});

}  // namespace gridshed
