#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "gridshed/network.hpp"

namespace gt {

inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::path(GRIDSHED_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline gridshed::Bus bus(int id, gridshed::BusKind kind, double v = 1.0) {
  gridshed::Bus b;
  b.id = id;
  b.kind = kind;
  b.voltage_mag = v;
  return b;
}

inline gridshed::Line line(int from, int to, double r, double x, double b = 0.0) {
  gridshed::Line l;
  l.from_bus = from;
  l.to_bus = to;
  l.resistance = r;
  l.reactance = x;
  l.shunt_susceptance = b;
  return l;
}

/// Buses 0 .. n-1 in a chain, bus 0 slack, all lines r = 0, x = 0.1.
inline gridshed::Network path_network(int n) {
  gridshed::Network net;
  for (int i = 0; i < n; ++i)
    net.buses.push_back(bus(i, i == 0 ? gridshed::BusKind::Slack : gridshed::BusKind::LoadOnly));
  for (int i = 0; i + 1 < n; ++i) net.lines.push_back(line(i, i + 1, 0.0, 0.1));
  gridshed::Generator g;
  g.bus = 0;
  g.transient_reactance = 0.1;
  net.generators.push_back(g);
  return net;
}

/// Worst relative error between an analytic gradient and central
/// differences of `f` around `x`; entries below `floor` in both are compared
/// absolutely against `floor`.
inline double fd_rel_error(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& x, const Eigen::VectorXd& analytic,
                           double h = 1e-5, double floor = 1e-6) {
  double worst = 0.0;
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    const double num = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(num), std::abs(analytic(i)), floor});
    worst = std::max(worst, std::abs(num - analytic(i)) / denom);
  }
  return worst;
}

}  // namespace gt
