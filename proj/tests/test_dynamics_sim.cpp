#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "gridshed/errors.hpp"
#include "gridshed/fsa.hpp"
#include "gridshed/power_flow.hpp"
#include "gridshed/swing.hpp"
#include "helpers.hpp"

using namespace gridshed;

namespace {

MachineSet one_machine(double h, double d, double pm) {
  MachineSet m;
  m.inertia = Eigen::VectorXd::Constant(1, h);
  m.damping = Eigen::VectorXd::Constant(1, d);
  m.p_mech = Eigen::VectorXd::Constant(1, pm);
  m.emf = Eigen::VectorXd::Ones(1);
  return m;
}

SwingState rest(int n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)}; }

// Constant-dP single machine: no network coupling, so Pe = 0 and Pm = dP.
TrajectoryRecord step_response(double h, double d, double dp, double dt, double horizon) {
  SimOptions o;
  o.dt = dt;
  o.horizon = horizon;
  o.blowup_hz = std::numeric_limits<double>::infinity();
  return integrate_swing(one_machine(h, d, dp), {{0.0, ComplexMatrix::Zero(1, 1)}}, rest(1), o);
}

double max_error(const TrajectoryRecord& tr, double h, double d, double dp) {
  double worst = 0.0;
  for (size_t k = 0; k < tr.times.size(); ++k) {
    const double exact = dp / d * (1.0 - std::exp(-d * tr.times[k] / (2.0 * h)));
    worst = std::max(worst, std::abs((tr.freq(0, static_cast<Eigen::Index>(k)) - 60.0) / 60.0 - exact));
  }
  return worst;
}

Contingency load_step(int bus, double pu, double t, bool relative = false) {
  Contingency c;
  c.kind = ContingencyKind::LoadStep;
  c.location = bus;
  c.magnitude = pu;
  c.relative = relative;
  c.t_apply = t;
  return c;
}

}  // namespace

TEST_SUITE("dynamics_sim") {

TEST_CASE("swing derivative examples") {
  const ComplexMatrix y0 = ComplexMatrix::Zero(1, 1);
  SUBCASE("equilibrium") {
    const SwingState d = swing_derivative(one_machine(1, 1, 0), y0, rest(1));
    CHECK(d.freq_dev(0) == 0.0);
    CHECK(d.angle(0) == 0.0);
  }
  SUBCASE("dP = 1 pu with H = D = 1") {
    const SwingState d = swing_derivative(one_machine(1, 1, 1), y0, rest(1));
    CHECK(d.freq_dev(0) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("steady state at df = dP / D") {
    SwingState s = rest(1);
    s.freq_dev(0) = 0.3 / 2.0;
    const SwingState d = swing_derivative(one_machine(1, 2, 0.3), y0, s);
    CHECK(std::abs(d.freq_dev(0)) < 1e-15);
    CHECK(d.angle(0) == doctest::Approx(2 * std::numbers::pi * 60.0 * 0.15));
  }
}

TEST_CASE("electrical power examples") {
  using cd = std::complex<double>;
  SUBCASE("purely reactive network, equal angles") {
    ComplexMatrix y(3, 3);
    y << cd(0, -20), cd(0, 10), cd(0, 10), cd(0, 10), cd(0, -20), cd(0, 10), cd(0, 10), cd(0, 10),
        cd(0, -20);
    const Eigen::VectorXd p = electrical_power(Eigen::VectorXd::Constant(3, 0.3), Eigen::VectorXd::Ones(3), y);
    CHECK(p.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("two machines, |Y12| = 10, angle 0.1") {
    ComplexMatrix y(2, 2);
    y << cd(0, -10), cd(0, 10), cd(0, 10), cd(0, -10);
    Eigen::VectorXd th(2);
    th << 0.1, 0.0;
    const Eigen::VectorXd p = electrical_power(th, Eigen::VectorXd::Ones(2), y);
    CHECK(p(0) == doctest::Approx(10.0 * std::cos(0.1 - std::numbers::pi / 2)).epsilon(1e-12));
    CHECK(p(0) == doctest::Approx(0.9983).epsilon(1e-4));
  }
  SUBCASE("lossless network sums to zero") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 50; ++trial) {
      ComplexMatrix y = ComplexMatrix::Zero(4, 4);
      for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
          const double b = 5.0 + 5.0 * std::abs(u(rng));
          y(i, j) = y(j, i) = cd(0, b);
          y(i, i) -= cd(0, b);
          y(j, j) -= cd(0, b);
        }
      Eigen::VectorXd th(4), v(4);
      for (int i = 0; i < 4; ++i) {
        th(i) = u(rng);
        v(i) = 1.0 + 0.1 * u(rng);
      }
      CHECK(std::abs(electrical_power(th, v, y).sum()) < 1e-10);
    }
  }
  SUBCASE("literal form agrees with the phasor form used by the integrator") {
    const DynamicModel m = DynamicModel::from_solved(solved(load_network(bundled_case("ieee9"))));
    const MachineSet& ms = m.machines();
    const Eigen::VectorXd pe = electrical_power(m.initial_state().angle, ms.emf, m.base_reduced());
    // at the initial point Pm = Pe, so the derivative vanishes
    const SwingState d = swing_derivative(ms, m.base_reduced(), m.initial_state());
    CHECK(d.freq_dev.cwiseAbs().maxCoeff() < 1e-12);
    CHECK((pe - ms.p_mech).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("analytic step response within 1e-3 pu at 1 ms") {
  const TrajectoryRecord tr = step_response(1, 1, 1, 1e-3, 20);
  CHECK(max_error(tr, 1, 1, 1) < 1e-3);
  // the value at t = 2 s
  const auto k = static_cast<Eigen::Index>(2000);
  CHECK(tr.times[2000] == doctest::Approx(2.0));
  CHECK((tr.freq(0, k) - 60.0) / 60.0 == doctest::Approx(1 - std::exp(-1.0)).epsilon(1e-9));
  CHECK((tr.freq(0, k) - 60.0) / 60.0 == doctest::Approx(0.632).epsilon(1e-3));
}

TEST_CASE("RK4 order: halving dt cuts the error by at least 3.5") {
  // coarse steps so truncation error dominates round-off
  const double e1 = max_error(step_response(1, 1, 1, 0.016, 20), 1, 1, 1);
  const double e2 = max_error(step_response(1, 1, 1, 0.008, 20), 1, 1, 1);
  CHECK(e1 / e2 >= 3.5);
  const double s1 = max_error(step_response(0.05, 10, 1, 1e-3, 1), 0.05, 10, 1);
  const double s2 = max_error(step_response(0.05, 10, 1, 5e-4, 1), 0.05, 10, 1);
  CHECK(s1 / s2 >= 3.5);
}

TEST_CASE("no disturbance is an exact fixed point") {
  for (const char* name : {"ieee9", "ieee39"}) {
    const DynamicModel m = DynamicModel::from_solved(solved(load_network(bundled_case(name))));
    SimOptions o;
    o.horizon = 2.0;
    const TrajectoryRecord tr = integrate_swing(m, std::nullopt, o);
    CHECK(tr.nadir == 60.0);
    CHECK(tr.peak == 60.0);
    CHECK_FALSE(tr.unstable);
    const auto [lo, hi] = frequency_nadir(tr);
    CHECK(lo == 60.0);
    CHECK(hi == 60.0);
  }
}

TEST_CASE("single-machine case: 2 MW step at t = 5 s gives a 2 Hz nadir") {
  const DynamicModel m = DynamicModel::from_solved(solved(load_network(bundled_case("single_machine"))));
  const TrajectoryRecord tr = integrate_swing(m, load_step(0, 2.0 / 60.0, 5.0));
  const auto [lo, hi] = frequency_nadir(tr);
  CHECK(60.0 - lo == doctest::Approx(2.0).epsilon(0.025));
  CHECK(hi == doctest::Approx(60.0));
  // no governor: the frequency never comes back
  CHECK(tr.freq(0, tr.freq.cols() - 1) < 59.0);
  CHECK(tr.freq(0, 4000) == doctest::Approx(60.0));
}

TEST_CASE("first-order limit: long horizon settles at dP / D") {
  const double dp = 0.01, d = 2.0;
  const TrajectoryRecord tr = step_response(1.0, d, -dp, 1e-2, 60.0);
  const auto [lo, hi] = frequency_nadir(tr);
  CHECK(lo == doctest::Approx(60.0 - dp / d * 60.0).epsilon(1e-9));
  CHECK(hi == doctest::Approx(60.0));
}

TEST_CASE("deeper steps give deeper nadirs") {
  const DynamicModel m = DynamicModel::from_solved(solved(load_network(bundled_case("single_machine"))));
  SimOptions o;
  o.horizon = 10.0;
  double prev = 60.0;
  for (double pu : {0.0, 0.005, 0.01, 0.02, 0.04}) {
    const double lo = integrate_swing(m, load_step(0, pu, 0.0), o).nadir;
    CHECK(lo <= prev);
    prev = lo;
  }
}

TEST_CASE("frequency_nadir on an empty record throws") {
  CHECK_THROWS_AS(frequency_nadir(TrajectoryRecord{}), InvalidInput);
}

TEST_CASE("blow-up guard flags instability") {
  SimOptions o;
  o.blowup_hz = 10.0;
  const TrajectoryRecord tr =
      integrate_swing(one_machine(1, 1, 1), {{0.0, ComplexMatrix::Zero(1, 1)}}, rest(1), o);
  CHECK(tr.unstable);
  CHECK(tr.times.back() < 20.0);
}

TEST_CASE("load steps raise electrical output by exactly the requested amount") {
  const DynamicModel m = DynamicModel::from_solved(solved(load_network(bundled_case("ieee9"))));
  const MachineSet& ms = m.machines();
  const double base = electrical_power(m.initial_state().angle, ms.emf, m.base_reduced()).sum();
  const auto abs_sched = m.schedule_for(load_step(4, 0.05, 0.5));
  REQUIRE(abs_sched.size() == 2);
  CHECK(abs_sched[1].t_start == 0.5);
  const double seen = electrical_power(m.initial_state().angle, ms.emf, abs_sched[1].y_red).sum() - base;
  CHECK(seen == doctest::Approx(0.05).epsilon(1e-8));

  const double p_load = m.network().bus_p_load()[4];
  const auto rel = m.schedule_for(load_step(4, 0.1, 0.5, true));
  const double seen_rel = electrical_power(m.initial_state().angle, ms.emf, rel[1].y_red).sum() - base;
  CHECK(seen_rel == doctest::Approx(0.1 * p_load).epsilon(1e-8));
}

TEST_CASE("FSA: empty contingency list is vacuously safe") {
  const FsaVerdict v = run_fsa_tds(solved(load_network(bundled_case("ieee9"))), {});
  CHECK(v.safe);
  CHECK(v.per_contingency.empty());
  CHECK(v.binding() == -1);
}

TEST_CASE("FSA: a 59.2 Hz nadir is unsafe") {
  // 0.8 Hz settling deviation on a D = 1 machine
  const Network net = solved(load_network(bundled_case("single_machine")));
  const FsaVerdict v = run_fsa_tds(net, {load_step(0, 0.8 / 60.0, 0.0)});
  REQUIRE(v.per_contingency.size() == 1);
  CHECK(v.per_contingency[0].f_min == doctest::Approx(59.2).epsilon(1e-4));
  CHECK_FALSE(v.safe);
}

TEST_CASE("FSA boundary is strict") {
  CHECK_FALSE(frequency_safe(59.5, 60.0));
  CHECK(frequency_safe(std::nextafter(59.5, 60.0), 60.0));
  CHECK_FALSE(frequency_safe(60.0 - 0.1, 60.5));
  CHECK(frequency_safe(59.9, std::nextafter(60.5, 60.0)));

  // a threshold placed exactly on a simulated nadir flips the verdict
  const Network net = solved(load_network(bundled_case("single_machine")));
  const std::vector<Contingency> set{load_step(0, 0.3 / 60.0, 1.0)};
  const double lo = run_fsa_tds(net, set).per_contingency[0].f_min;
  CHECK_FALSE(run_fsa_tds(net, set, {lo, 60.5}).safe);
  CHECK(run_fsa_tds(net, set, {std::nextafter(lo, 0.0), 60.5}).safe);
}

TEST_CASE("FSA verdict equals the manual composition on 9-bus load steps") {
  const Network net = solved(load_network(bundled_case("ieee9")));
  const auto set = load_contingencies(bundled_contingencies("ieee9_loadsteps"));
  Network heavy = net;
  for (auto& l : heavy.loads) l.p_load *= 1.4;
  for (const Network& n : {net, solved(heavy)}) {
    const FsaVerdict v = run_fsa_tds(n, set);
    const DynamicModel m = DynamicModel::from_solved(n);
    bool all = true;
    for (size_t i = 0; i < set.size(); ++i) {
      const auto [lo, hi] = frequency_nadir(integrate_swing(m, set[i]));
      CHECK(v.per_contingency[i].f_min == lo);
      CHECK(v.per_contingency[i].f_max == hi);
      all = all && lo > 59.5 && hi < 60.5;
    }
    CHECK(v.safe == all);
  }
}

TEST_CASE("line trip and fault schedules") {
  const DynamicModel m = DynamicModel::from_solved(solved(load_network(bundled_case("ieee39"))));
  Contingency trip;
  trip.kind = ContingencyKind::LineTrip;
  trip.location = 3;
  trip.t_apply = 0.5;
  CHECK(m.schedule_for(trip).size() == 2);
  Contingency fault = trip;
  fault.kind = ContingencyKind::ThreePhaseFault;
  const auto s = m.schedule_for(fault);
  REQUIRE(s.size() == 3);
  CHECK(s[2].t_start == doctest::Approx(0.5 + 0.083));
  CHECK((s[2].y_red - m.schedule_for(trip)[1].y_red).cwiseAbs().maxCoeff() < 1e-12);
  trip.location = 999;
  CHECK_THROWS_AS(m.schedule_for(trip), InvalidInput);
}

}  // TEST_SUITE
