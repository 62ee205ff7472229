#pragma once

#include <vector>

#include "gridshed/admittance.hpp"
#include "gridshed/network.hpp"

namespace gridshed {

struct PowerFlowOptions {
  double tol = 1e-8;  // pu, max-norm of the mismatch vector
  int max_iter = 20;
};

struct PowerFlowResult {
  std::vector<double> voltage_mag;
  std::vector<double> voltage_ang;
  std::vector<double> p_net;
  std::vector<double> q_net;
  int iterations = 0;
  double max_mismatch = 0.0;
};

/// Full Newton-Raphson in polar coordinates from a flat start. Slack holds
/// |V| and angle 0, generator buses hold |V| and scheduled P, load-only buses
/// hold scheduled P and Q. Throws DivergedCase after max_iter iterations.
PowerFlowResult solve_power_flow(const Network& net, const PowerFlowOptions& opts = {});

/// Per-bus injections evaluated directly from bus voltages (polar form of the
/// network equations), used to audit a solution.
void injections_from_voltages(const ComplexMatrix& y, const std::vector<double>& vm,
                              const std::vector<double>& va, std::vector<double>& p,
                              std::vector<double>& q);

/// Writes a solution back into the bus records and sets the slack machine's
/// p_mech to the solved slack generation.
void apply_solution(Network& net, const PowerFlowResult& pf);

/// Convenience: solve and return a copy carrying the solution.
Network solved(Network net, const PowerFlowOptions& opts = {});

}  // namespace gridshed
