#include "gridshed/power_flow.hpp"

#include <cmath>
#include <complex>
#include <string>

#include "gridshed/errors.hpp"

namespace gridshed {

using cd = std::complex<double>;
using Eigen::VectorXcd;
using Eigen::VectorXd;

void injections_from_voltages(const ComplexMatrix& y, const std::vector<double>& vm,
                              const std::vector<double>& va, std::vector<double>& p,
                              std::vector<double>& q) {
  const auto n = static_cast<Eigen::Index>(vm.size());
  p.assign(vm.size(), 0.0);
  q.assign(vm.size(), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    double pi = 0.0, qi = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const cd yij = y(i, j);
      if (yij == cd(0.0, 0.0)) continue;
      const double th = va[static_cast<size_t>(i)] - va[static_cast<size_t>(j)];
      const double c = std::cos(th), s = std::sin(th);
      pi += vm[static_cast<size_t>(j)] * (yij.real() * c + yij.imag() * s);
      qi += vm[static_cast<size_t>(j)] * (yij.real() * s - yij.imag() * c);
    }
    p[static_cast<size_t>(i)] = vm[static_cast<size_t>(i)] * pi;
    q[static_cast<size_t>(i)] = vm[static_cast<size_t>(i)] * qi;
  }
}

PowerFlowResult solve_power_flow(const Network& net, const PowerFlowOptions& opts) {
  net.validate();
  const int n = net.bus_count();
  const ComplexMatrix y = build_admittance(net);
  const std::vector<double> p_sched = net.scheduled_p();
  const std::vector<double> q_load = net.bus_q_load();

  std::vector<int> pv_pq, pq;  // angle unknowns, magnitude unknowns
  for (const auto& b : net.buses) {
    if (b.kind != BusKind::Slack) pv_pq.push_back(b.id);
    if (b.kind == BusKind::LoadOnly) pq.push_back(b.id);
  }
  const int na = static_cast<int>(pv_pq.size());
  const int nm = static_cast<int>(pq.size());

  VectorXd vm(n), va = VectorXd::Zero(n);
  for (const auto& b : net.buses) vm(b.id) = b.kind == BusKind::LoadOnly ? 1.0 : b.voltage_mag;

  auto mismatch = [&](const VectorXcd& v, VectorXcd& ibus, Eigen::VectorXd& f) {
    ibus = y * v;
    f.resize(na + nm);
    for (int a = 0; a < na; ++a) {
      const int i = pv_pq[a];
      f(a) = (v(i) * std::conj(ibus(i))).real() - p_sched[static_cast<size_t>(i)];
    }
    for (int m = 0; m < nm; ++m) {
      const int i = pq[m];
      f(na + m) = (v(i) * std::conj(ibus(i))).imag() + q_load[static_cast<size_t>(i)];
    }
  };

  PowerFlowResult res;
  VectorXcd v(n), ibus;
  VectorXd f;
  int iter = 0;
  for (;; ++iter) {
    for (int i = 0; i < n; ++i) v(i) = std::polar(vm(i), va(i));
    mismatch(v, ibus, f);
    res.max_mismatch = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(res.max_mismatch))
      throw DivergedCase("power flow produced non-finite mismatch", iter);
    if (res.max_mismatch < opts.tol) break;
    if (iter >= opts.max_iter)
      throw DivergedCase("power flow did not converge in " + std::to_string(opts.max_iter) +
                             " iterations (mismatch " + std::to_string(res.max_mismatch) + ")",
                         iter);

    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V)); dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    const VectorXcd vnorm = v.cwiseQuotient(vm.cast<cd>());
    ComplexMatrix ds_dva = -(y * v.asDiagonal().toDenseMatrix()).conjugate();
    for (int i = 0; i < n; ++i) ds_dva(i, i) += std::conj(ibus(i));
    ds_dva = (cd(0.0, 1.0) * v).asDiagonal() * ds_dva;
    ComplexMatrix ds_dvm = v.asDiagonal() * (y * vnorm.asDiagonal().toDenseMatrix()).conjugate();
    for (int i = 0; i < n; ++i) ds_dvm(i, i) += std::conj(ibus(i)) * vnorm(i);

    Eigen::MatrixXd jac(na + nm, na + nm);
    for (int r = 0; r < na; ++r) {
      for (int c = 0; c < na; ++c) jac(r, c) = ds_dva(pv_pq[r], pv_pq[c]).real();
      for (int c = 0; c < nm; ++c) jac(r, na + c) = ds_dvm(pv_pq[r], pq[c]).real();
    }
    for (int r = 0; r < nm; ++r) {
      for (int c = 0; c < na; ++c) jac(na + r, c) = ds_dva(pq[r], pv_pq[c]).imag();
      for (int c = 0; c < nm; ++c) jac(na + r, na + c) = ds_dvm(pq[r], pq[c]).imag();
    }
    const VectorXd dx = jac.partialPivLu().solve(-f);
    if (!dx.allFinite()) throw DivergedCase("power flow Jacobian is singular", iter);
    for (int a = 0; a < na; ++a) va(pv_pq[a]) += dx(a);
    for (int m = 0; m < nm; ++m) vm(pq[m]) += dx(na + m);
  }

  res.iterations = iter;
  res.voltage_mag.assign(vm.data(), vm.data() + n);
  res.voltage_ang.assign(va.data(), va.data() + n);
  res.p_net.resize(static_cast<size_t>(n));
  res.q_net.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const cd s = v(i) * std::conj(ibus(i));
    res.p_net[static_cast<size_t>(i)] = s.real();
    res.q_net[static_cast<size_t>(i)] = s.imag();
  }
  return res;
}

void apply_solution(Network& net, const PowerFlowResult& pf) {
  for (auto& b : net.buses) {
    const auto i = static_cast<size_t>(b.id);
    b.voltage_mag = pf.voltage_mag[i];
    b.voltage_ang = pf.voltage_ang[i];
    b.p_net = pf.p_net[i];
    b.q_net = pf.q_net[i];
  }
  const int slack = net.slack_bus();
  const std::vector<double> p_load = net.bus_p_load();
  int on_slack = 0;
  for (const auto& g : net.generators) on_slack += g.bus == slack;
  if (on_slack == 0) return;
  const double p_gen = pf.p_net[static_cast<size_t>(slack)] + p_load[static_cast<size_t>(slack)];
  for (auto& g : net.generators)
    if (g.bus == slack) g.p_mech = p_gen / on_slack;
}

Network solved(Network net, const PowerFlowOptions& opts) {
  const PowerFlowResult pf = solve_power_flow(net, opts);
  apply_solution(net, pf);
  return net;
}

}  // namespace gridshed
