#include "gridshed/admittance.hpp"

#include <algorithm>
#include <complex>

#include "gridshed/errors.hpp"

namespace gridshed {

using cd = std::complex<double>;

ComplexMatrix build_admittance(const Network& net) {
  const int n = net.bus_count();
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (const auto& l : net.lines) {
    if (l.resistance == 0.0 && l.reactance == 0.0)
      throw InvalidInput("zero-impedance branch");
    if (!l.in_service) continue;
    const cd ys = 1.0 / cd(l.resistance, l.reactance);
    const cd ysh(0.0, 0.5 * l.shunt_susceptance);
    y(l.from_bus, l.from_bus) += ys + ysh;
    y(l.to_bus, l.to_bus) += ys + ysh;
    y(l.from_bus, l.to_bus) -= ys;
    y(l.to_bus, l.from_bus) -= ys;
  }
  return y;
}

ComplexMatrix kron_reduce(const ComplexMatrix& y, std::span<const int> keep) {
  const int n = static_cast<int>(y.rows());
  if (y.cols() != n) throw InvalidInput("kron_reduce needs a square matrix");
  std::vector<char> kept(static_cast<size_t>(n), 0);
  for (int k : keep) {
    if (k < 0 || k >= n) throw InvalidInput("kron_reduce keep index out of range");
    if (kept[static_cast<size_t>(k)]) throw InvalidInput("kron_reduce keep index repeated");
    kept[static_cast<size_t>(k)] = 1;
  }
  std::vector<int> elim;
  for (int i = 0; i < n; ++i)
    if (!kept[static_cast<size_t>(i)]) elim.push_back(i);

  const int nk = static_cast<int>(keep.size());
  const int ne = static_cast<int>(elim.size());
  ComplexMatrix ykk(nk, nk), yke(nk, ne), yek(ne, nk), yee(ne, ne);
  for (int a = 0; a < nk; ++a) {
    for (int b = 0; b < nk; ++b) ykk(a, b) = y(keep[a], keep[b]);
    for (int b = 0; b < ne; ++b) yke(a, b) = y(keep[a], elim[b]);
  }
  for (int a = 0; a < ne; ++a) {
    for (int b = 0; b < nk; ++b) yek(a, b) = y(elim[a], keep[b]);
    for (int b = 0; b < ne; ++b) yee(a, b) = y(elim[a], elim[b]);
  }
  if (ne == 0) return ykk;

  Eigen::FullPivLU<ComplexMatrix> lu(yee);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw DegenerateCase("kron_reduce: eliminated block is singular");
  return ykk - yke * lu.solve(yek);
}

RealMatrix graph_shift_operator(const Network& net, ShiftKind kind) {
  const int n = net.bus_count();
  RealMatrix s = RealMatrix::Zero(n, n);
  if (kind == ShiftKind::Adjacency) {
    for (const auto& l : net.lines) {
      if (!l.in_service) continue;
      s(l.from_bus, l.to_bus) = 1.0;
      s(l.to_bus, l.from_bus) = 1.0;
    }
    return s;
  }
  const ComplexMatrix y = build_admittance(net);
  for (const auto& l : net.lines) {
    if (!l.in_service) continue;
    const double w = std::abs(y(l.from_bus, l.to_bus));
    s(l.from_bus, l.to_bus) = w;
    s(l.to_bus, l.from_bus) = w;
  }
  Eigen::SelfAdjointEigenSolver<RealMatrix> eig(s, Eigen::EigenvaluesOnly);
  const double radius = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (radius > 0.0) s /= radius;
  return s;
}

}  // namespace gridshed
