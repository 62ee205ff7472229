#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridshed/admittance.hpp"
#include "gridshed/contingency.hpp"
#include "gridshed/network.hpp"

namespace gridshed {

/// Classical machines seen through a Kron-reduced network.
struct MachineSet {
  Eigen::VectorXd inertia;   // H, s
  Eigen::VectorXd damping;   // D, pu/pu
  Eigen::VectorXd p_mech;    // pu
  Eigen::VectorXd emf;       // |E'|, pu
  double f_nominal = 60.0;

  int size() const { return static_cast<int>(inertia.size()); }
};

/// Rotor angles (rad) and per-unit frequency deviations (fraction of f_nominal).
struct SwingState {
  Eigen::VectorXd angle;
  Eigen::VectorXd freq_dev;
};

/// Eq. (3) in its literal form: P_i = V_i sum_j |Y_ij| V_j cos(th_i - th_j - phi_ij).
Eigen::VectorXd electrical_power(const Eigen::VectorXd& angles, const Eigen::VectorXd& voltages,
                                 const ComplexMatrix& y_red);

/// Swing dynamics 2H d(df)/dt = (Pm - Pe) - D df, d(angle)/dt = 2 pi f_nom df.
/// Pe is evaluated from the phasor product E conj(Y E).
SwingState swing_derivative(const MachineSet& machines, const ComplexMatrix& y_red,
                            const SwingState& state);

/// Piecewise-constant reduced network: segment k is active from t_start
/// until the next segment begins.
struct NetworkSegment {
  double t_start = 0.0;
  ComplexMatrix y_red;
};
using SwingSchedule = std::vector<NetworkSegment>;

struct SimOptions {
  double dt = 1e-3;
  double horizon = 20.0;
  int record_stride = 1;     // keep every n-th step in the trajectory
  double blowup_hz = 10.0;   // |df| above this flags instability and stops
};

struct TrajectoryRecord {
  std::vector<double> times;
  Eigen::MatrixXd freq;  // N_G x T, Hz
  double nadir = 0.0;    // Hz, minimum over machines and every step
  double peak = 0.0;     // Hz
  bool unstable = false;
};

/// Fixed-step classical RK4 over a switching schedule.
TrajectoryRecord integrate_swing(const MachineSet& machines, const SwingSchedule& schedule,
                                 const SwingState& initial, const SimOptions& opts = {});

/// (f_min, f_max) over the recorded samples. Throws InvalidInput when empty.
std::pair<double, double> frequency_nadir(const TrajectoryRecord& traj);

/// Network-level model: machines behind transient reactance, loads converted
/// to constant admittance at their solved voltages.
class DynamicModel {
 public:
  /// `net` must carry a converged power-flow solution.
  static DynamicModel from_solved(const Network& net);

  const MachineSet& machines() const { return machines_; }
  const SwingState& initial_state() const { return initial_; }
  const ComplexMatrix& base_reduced() const { return y_base_; }
  const Network& network() const { return net_; }

  /// Switching schedule that realises `c` (or the undisturbed system).
  SwingSchedule schedule_for(const std::optional<Contingency>& c) const;

 private:
  struct Modification {
    std::vector<int> tripped_lines;
    std::vector<std::pair<int, std::complex<double>>> shunts;
  };
  ComplexMatrix reduced(const Modification& mod) const;

  Network net_;
  std::vector<std::complex<double>> load_admittance_;  // per bus
  MachineSet machines_;
  SwingState initial_;
  ComplexMatrix y_base_;
};

TrajectoryRecord integrate_swing(const DynamicModel& model,
                                 const std::optional<Contingency>& contingency,
                                 const SimOptions& opts = {});

void write_trajectory_csv(const TrajectoryRecord& traj, const std::filesystem::path& path);

}  // namespace gridshed
