#include "gridshed/swing.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numbers>

#include "gridshed/errors.hpp"
#include "gridshed/util.hpp"

namespace gridshed {

using cd = std::complex<double>;
using Eigen::VectorXd;

namespace {

constexpr double kFaultShunt = 1e6;  // pu admittance of a bolted fault

// Pe_i = Re(E_i conj(sum_j Y_ij E_j)); buffers are caller-owned.
void phasor_power(const ComplexMatrix& y, const double* emf, const double* angle, int n,
                  cd* e, double* pe) {
  for (int i = 0; i < n; ++i) e[i] = std::polar(emf[i], angle[i]);
  for (int i = 0; i < n; ++i) {
    cd acc(0.0, 0.0);
    for (int j = 0; j < n; ++j) acc += y(i, j) * e[j];
    pe[i] = (e[i] * std::conj(acc)).real();
  }
}

}  // namespace

VectorXd electrical_power(const VectorXd& angles, const VectorXd& voltages,
                          const ComplexMatrix& y_red) {
  const auto n = angles.size();
  if (voltages.size() != n || y_red.rows() != n || y_red.cols() != n)
    throw InvalidInput("electrical_power: dimension mismatch");
  VectorXd pe = VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double mag = std::abs(y_red(i, j));
      if (mag == 0.0) continue;
      acc += mag * voltages(j) * std::cos(angles(i) - angles(j) - std::arg(y_red(i, j)));
    }
    pe(i) = voltages(i) * acc;
  }
  return pe;
}

SwingState swing_derivative(const MachineSet& m, const ComplexMatrix& y_red,
                            const SwingState& s) {
  const int n = m.size();
  std::vector<cd> e(static_cast<size_t>(n));
  std::vector<double> pe(static_cast<size_t>(n));
  phasor_power(y_red, m.emf.data(), s.angle.data(), n, e.data(), pe.data());
  SwingState d{VectorXd(n), VectorXd(n)};
  const double omega = 2.0 * std::numbers::pi * m.f_nominal;
  for (int i = 0; i < n; ++i) {
    d.angle(i) = omega * s.freq_dev(i);
    d.freq_dev(i) =
        (m.p_mech(i) - pe[static_cast<size_t>(i)] - m.damping(i) * s.freq_dev(i)) /
        (2.0 * m.inertia(i));
  }
  return d;
}

TrajectoryRecord integrate_swing(const MachineSet& m, const SwingSchedule& schedule,
                                 const SwingState& initial, const SimOptions& opts) {
  const int n = m.size();
  if (schedule.empty()) throw InvalidInput("integrate_swing: empty schedule");
  if (!(opts.dt > 0.0) || !(opts.horizon >= 0.0) || opts.record_stride < 1)
    throw InvalidInput("integrate_swing: bad step options");
  for (const auto& seg : schedule)
    if (seg.y_red.rows() != n || seg.y_red.cols() != n)
      throw InvalidInput("integrate_swing: reduced network size mismatch");

  const auto steps = static_cast<long>(std::llround(opts.horizon / opts.dt));
  const double omega = 2.0 * std::numbers::pi * m.f_nominal;
  const double fnom = m.f_nominal;
  const auto un = static_cast<size_t>(n);

  std::vector<double> ang(initial.angle.data(), initial.angle.data() + n);
  std::vector<double> fd(initial.freq_dev.data(), initial.freq_dev.data() + n);
  std::vector<double> a_tmp(un), f_tmp(un), pe(un);
  std::vector<double> ka[4], kf[4];
  for (int s = 0; s < 4; ++s) {
    ka[s].resize(un);
    kf[s].resize(un);
  }
  std::vector<cd> e(un);
  std::vector<double> inv2h(un);
  for (int i = 0; i < n; ++i) inv2h[static_cast<size_t>(i)] = 0.5 / m.inertia(i);

  auto deriv = [&](const ComplexMatrix& y, const double* a, const double* f, double* da,
                   double* df) {
    phasor_power(y, m.emf.data(), a, n, e.data(), pe.data());
    for (size_t i = 0; i < un; ++i) {
      da[i] = omega * f[i];
      df[i] = (m.p_mech(static_cast<Eigen::Index>(i)) - pe[i] -
               m.damping(static_cast<Eigen::Index>(i)) * f[i]) *
              inv2h[i];
    }
  };

  TrajectoryRecord rec;
  const long n_records = steps / opts.record_stride + 1 + (steps % opts.record_stride ? 1 : 0);
  rec.times.reserve(static_cast<size_t>(n_records));
  std::vector<double> samples;
  samples.reserve(static_cast<size_t>(n_records) * un);
  double fmin = std::numeric_limits<double>::infinity();
  double fmax = -fmin;

  auto observe = [&](long k, bool force_record) {
    for (size_t i = 0; i < un; ++i) {
      const double hz = fnom * (1.0 + fd[i]);
      fmin = std::min(fmin, hz);
      fmax = std::max(fmax, hz);
    }
    if (force_record || k % opts.record_stride == 0) {
      rec.times.push_back(static_cast<double>(k) * opts.dt);
      for (size_t i = 0; i < un; ++i) samples.push_back(fnom * (1.0 + fd[i]));
    }
  };
  auto blown_up = [&]() {
    for (size_t i = 0; i < un; ++i)
      if (!std::isfinite(fd[i]) || std::abs(fd[i]) * fnom > opts.blowup_hz) return true;
    return false;
  };

  observe(0, true);
  size_t seg = 0;
  const double h = opts.dt;
  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * h;
    while (seg + 1 < schedule.size() && schedule[seg + 1].t_start <= t + 0.5 * h) ++seg;
    const ComplexMatrix& y = schedule[seg].y_red;

    deriv(y, ang.data(), fd.data(), ka[0].data(), kf[0].data());
    for (size_t i = 0; i < un; ++i) {
      a_tmp[i] = ang[i] + 0.5 * h * ka[0][i];
      f_tmp[i] = fd[i] + 0.5 * h * kf[0][i];
    }
    deriv(y, a_tmp.data(), f_tmp.data(), ka[1].data(), kf[1].data());
    for (size_t i = 0; i < un; ++i) {
      a_tmp[i] = ang[i] + 0.5 * h * ka[1][i];
      f_tmp[i] = fd[i] + 0.5 * h * kf[1][i];
    }
    deriv(y, a_tmp.data(), f_tmp.data(), ka[2].data(), kf[2].data());
    for (size_t i = 0; i < un; ++i) {
      a_tmp[i] = ang[i] + h * ka[2][i];
      f_tmp[i] = fd[i] + h * kf[2][i];
    }
    deriv(y, a_tmp.data(), f_tmp.data(), ka[3].data(), kf[3].data());
    for (size_t i = 0; i < un; ++i) {
      ang[i] += h / 6.0 * (ka[0][i] + 2.0 * ka[1][i] + 2.0 * ka[2][i] + ka[3][i]);
      fd[i] += h / 6.0 * (kf[0][i] + 2.0 * kf[1][i] + 2.0 * kf[2][i] + kf[3][i]);
    }

    const bool unstable = blown_up();
    const bool last = (k + 1 == steps) || unstable;
    observe(k + 1, last);
    if (unstable) {
      rec.unstable = true;
      break;
    }
  }

  const auto cols = static_cast<Eigen::Index>(rec.times.size());
  rec.freq = Eigen::Map<const Eigen::MatrixXd>(samples.data(), n, cols);
  rec.nadir = fmin;
  rec.peak = fmax;
  return rec;
}

std::pair<double, double> frequency_nadir(const TrajectoryRecord& traj) {
  if (traj.freq.size() == 0) throw InvalidInput("frequency_nadir: empty trajectory");
  return {traj.freq.minCoeff(), traj.freq.maxCoeff()};
}

DynamicModel DynamicModel::from_solved(const Network& net) {
  net.validate();
  DynamicModel dm;
  dm.net_ = net;
  const int n = net.bus_count();
  const int ng = static_cast<int>(net.generators.size());
  if (ng == 0) throw InvalidInput("dynamic model needs at least one generator");

  const std::vector<double> p_load = net.bus_p_load();
  const std::vector<double> q_load = net.bus_q_load();
  dm.load_admittance_.assign(static_cast<size_t>(n), cd(0.0, 0.0));
  for (int b = 0; b < n; ++b) {
    const double v = net.buses[static_cast<size_t>(b)].voltage_mag;
    dm.load_admittance_[static_cast<size_t>(b)] =
        cd(p_load[static_cast<size_t>(b)], -q_load[static_cast<size_t>(b)]) / (v * v);
  }

  std::vector<int> per_bus(static_cast<size_t>(n), 0);
  for (const auto& g : net.generators) ++per_bus[static_cast<size_t>(g.bus)];

  MachineSet& m = dm.machines_;
  m.inertia.resize(ng);
  m.damping.resize(ng);
  m.p_mech.resize(ng);
  m.emf.resize(ng);
  m.f_nominal = net.f_nominal;
  dm.initial_.angle.resize(ng);
  dm.initial_.freq_dev = VectorXd::Zero(ng);
  for (int i = 0; i < ng; ++i) {
    auto& g = dm.net_.generators[static_cast<size_t>(i)];
    if (!(g.transient_reactance > 0.0))
      throw InvalidInput("dynamic model needs positive transient reactance");
    const auto& bus = net.buses[static_cast<size_t>(g.bus)];
    const cd v = std::polar(bus.voltage_mag, bus.voltage_ang);
    const double q_gen = (bus.q_net + q_load[static_cast<size_t>(g.bus)]) /
                         per_bus[static_cast<size_t>(g.bus)];
    const cd current = std::conj(cd(g.p_mech, q_gen) / v);
    const cd emf = v + cd(0.0, g.transient_reactance) * current;
    g.internal_voltage = std::abs(emf);
    m.inertia(i) = g.inertia_H;
    m.damping(i) = g.damping_D;
    m.emf(i) = std::abs(emf);
    dm.initial_.angle(i) = std::arg(emf);
  }

  dm.y_base_ = dm.reduced({});
  // Mechanical power balances the initial electrical power exactly, so the
  // undisturbed system is a fixed point of the integrator.
  std::vector<cd> e(static_cast<size_t>(ng));
  std::vector<double> pe(static_cast<size_t>(ng));
  phasor_power(dm.y_base_, m.emf.data(), dm.initial_.angle.data(), ng, e.data(), pe.data());
  for (int i = 0; i < ng; ++i) m.p_mech(i) = pe[static_cast<size_t>(i)];
  return dm;
}

ComplexMatrix DynamicModel::reduced(const Modification& mod) const {
  Network topo = net_;
  for (int li : mod.tripped_lines) topo.lines[static_cast<size_t>(li)].in_service = false;
  const int n = topo.bus_count();
  const int ng = machines_.size();
  ComplexMatrix y = ComplexMatrix::Zero(n + ng, n + ng);
  y.topLeftCorner(n, n) = build_admittance(topo);
  for (int b = 0; b < n; ++b) y(b, b) += load_admittance_[static_cast<size_t>(b)];
  for (const auto& [bus, shunt] : mod.shunts) y(bus, bus) += shunt;
  std::vector<int> keep(static_cast<size_t>(ng));
  for (int i = 0; i < ng; ++i) {
    const auto& g = net_.generators[static_cast<size_t>(i)];
    const cd yg = 1.0 / cd(0.0, g.transient_reactance);
    const int node = n + i;
    y(node, node) += yg;
    y(g.bus, g.bus) += yg;
    y(node, g.bus) -= yg;
    y(g.bus, node) -= yg;
    keep[static_cast<size_t>(i)] = node;
  }
  return kron_reduce(y, keep);
}

SwingSchedule DynamicModel::schedule_for(const std::optional<Contingency>& c) const {
  SwingSchedule sched{{0.0, y_base_}};
  if (!c) return sched;
  c->validate();
  const int n = net_.bus_count();
  const int nl = static_cast<int>(net_.lines.size());
  Modification post;
  switch (c->kind) {
    case ContingencyKind::LineTrip: {
      if (c->location >= nl) throw InvalidInput("line_trip location out of range");
      post.tripped_lines.push_back(c->location);
      sched.push_back({c->t_apply, reduced(post)});
      break;
    }
    case ContingencyKind::LoadStep: {
      if (c->location >= n) throw InvalidInput("load_step location out of range");
      const auto b = static_cast<size_t>(c->location);
      const double v2 = std::pow(net_.buses[b].voltage_mag, 2);
      const double target = c->relative ? c->magnitude * load_admittance_[b].real() * v2 : c->magnitude;
      // Resistive shunt sized so the machines see `target` of extra electrical
      // power at the instant of the step; the constant-admittance loads would
      // otherwise hand back a voltage-dependent share of it.
      const double base = electrical_power(initial_.angle, machines_.emf, y_base_).sum();
      double g = target / v2;
      ComplexMatrix y_post;
      for (int it = 0; it < 8; ++it) {
        post.shunts.assign(1, {c->location, cd(g, 0.0)});
        y_post = reduced(post);
        const double seen = electrical_power(initial_.angle, machines_.emf, y_post).sum() - base;
        if (seen * target <= 0.0 || std::abs(seen - target) <= 1e-10 * std::abs(target)) break;
        g *= target / seen;
      }
      sched.push_back({c->t_apply, y_post});
      break;
    }
    case ContingencyKind::ThreePhaseFault: {
      if (c->location >= nl) throw InvalidInput("fault location out of range");
      Modification during;
      during.shunts.push_back({net_.lines[static_cast<size_t>(c->location)].to_bus,
                               cd(kFaultShunt, 0.0)});
      sched.push_back({c->t_apply, reduced(during)});
      post.tripped_lines.push_back(c->location);
      sched.push_back({c->t_apply + c->fault_duration, reduced(post)});
      break;
    }
  }
  return sched;
}

TrajectoryRecord integrate_swing(const DynamicModel& model,
                                 const std::optional<Contingency>& contingency,
                                 const SimOptions& opts) {
  return integrate_swing(model.machines(), model.schedule_for(contingency),
                         model.initial_state(), opts);
}

void write_trajectory_csv(const TrajectoryRecord& traj, const std::filesystem::path& path) {
  std::string out = "time";
  for (Eigen::Index g = 0; g < traj.freq.rows(); ++g) out += ",gen_" + std::to_string(g);
  out += "\n";
  for (size_t t = 0; t < traj.times.size(); ++t) {
    out += fmt_fixed(traj.times[t], 4);
    for (Eigen::Index g = 0; g < traj.freq.rows(); ++g)
      out += "," + fmt_fixed(traj.freq(g, static_cast<Eigen::Index>(t)), 6);
    out += "\n";
  }
  write_file(path, out);
}

}  // namespace gridshed
