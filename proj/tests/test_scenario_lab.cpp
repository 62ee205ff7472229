#include <doctest.h>

#include <algorithm>
#include <set>

#include "gridshed/dataset.hpp"
#include "gridshed/errors.hpp"
#include "gridshed/fsa.hpp"
#include "gridshed/power_flow.hpp"
#include "gridshed/scenario.hpp"
#include "helpers.hpp"

using namespace gridshed;

namespace {

const Network& ieee9() {
  static const Network net = solved(load_network(bundled_case("ieee9")));
  return net;
}

const std::vector<Contingency>& ieee9_set() {
  static const auto set = load_contingencies(bundled_contingencies("ieee9_loadsteps"));
  return set;
}

// Shared 200-point dataset; generating it takes a few seconds.
const LabeledDataset& ds200() {
  static const LabeledDataset ds = generate_dataset(ieee9(), ieee9_set(), 200, 5);
  return ds;
}

LabeledDataset blank(int m, int n_bus = 1) {
  LabeledDataset ds;
  ds.n_bus = n_bus;
  ds.features = RowMatrix::Zero(m, 4 * n_bus);
  ds.labels.assign(static_cast<size_t>(m), 1);
  ds.binding.assign(static_cast<size_t>(m), -1);
  ds.gen_scale = RowMatrix::Ones(m, 1);
  ds.load_scale = RowMatrix::Ones(m, 1);
  return ds;
}

}  // namespace

TEST_SUITE("scenario_lab") {

TEST_CASE("unit scales reproduce the base solution") {
  const Network& base = ieee9();
  const OperatingPoint op = apply_scales(base, std::vector<double>(base.generators.size(), 1.0),
                                         std::vector<double>(base.loads.size(), 1.0));
  for (int b = 0; b < base.bus_count(); ++b) {
    const auto& x = op.solved.buses[static_cast<size_t>(b)];
    const auto& y = base.buses[static_cast<size_t>(b)];
    CHECK(x.voltage_mag == doctest::Approx(y.voltage_mag).epsilon(1e-10));
    CHECK(x.voltage_ang == doctest::Approx(y.voltage_ang).epsilon(1e-10));
  }
}

TEST_CASE("sampling is deterministic per seed") {
  const OperatingPoint a = sample_operating_point(ieee9(), 42);
  const OperatingPoint b = sample_operating_point(ieee9(), 42);
  const OperatingPoint c = sample_operating_point(ieee9(), 43);
  CHECK(a.gen_scale == b.gen_scale);
  CHECK(a.load_scale == b.load_scale);
  CHECK(bus_features(a.solved) == bus_features(b.solved));
  CHECK(a.load_scale != c.load_scale);
}

TEST_CASE("1000 draws stay inside the scale ranges") {
  double lo = 10, hi = -10, llo = 10, lhi = -10;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const OperatingPoint op = sample_operating_point(ieee9(), s);
    for (double g : op.gen_scale) {
      lo = std::min(lo, g);
      hi = std::max(hi, g);
    }
    for (double l : op.load_scale) {
      llo = std::min(llo, l);
      lhi = std::max(lhi, l);
    }
  }
  CHECK(lo >= 0.7);
  CHECK(hi <= 1.2);
  CHECK(llo >= 0.9);
  CHECK(lhi <= 1.5);
  // and they actually spread over the range
  CHECK(lo < 0.75);
  CHECK(hi > 1.15);
}

TEST_CASE("bus features are bus-major v, delta, p, q") {
  const auto f = bus_features(ieee9());
  REQUIRE(f.size() == 36);
  for (int b = 0; b < 9; ++b) {
    const auto& bus = ieee9().buses[static_cast<size_t>(b)];
    CHECK(f[static_cast<size_t>(4 * b)] == bus.voltage_mag);
    CHECK(f[static_cast<size_t>(4 * b + 1)] == bus.voltage_ang);
    CHECK(f[static_cast<size_t>(4 * b + 2)] == bus.p_net);
    CHECK(f[static_cast<size_t>(4 * b + 3)] == bus.q_net);
  }
}

TEST_CASE("one point with no contingencies is safe") {
  const LabeledDataset ds = generate_dataset(ieee9(), {}, 1, 9);
  REQUIRE(ds.rows() == 1);
  CHECK(ds.labels[0] == 1);
  CHECK(ds.binding[0] == -1);
}

TEST_CASE("200 points on 9-bus: both classes present") {
  const LabeledDataset& ds = ds200();
  CHECK(ds.rows() == 200);
  const int safe = static_cast<int>(std::count(ds.labels.begin(), ds.labels.end(), 1));
  MESSAGE("safe fraction " << safe / 200.0);
  CHECK(safe > 0);
  CHECK(safe < 200);
}

TEST_CASE("stored labels agree with an independent relabel") {
  const LabeledDataset& ds = ds200();
  for (int r = 0; r < ds.rows(); r += 7) {
    const auto gs = ds.gen_scale.row(r);
    const auto ls = ds.load_scale.row(r);
    const OperatingPoint op = apply_scales(ieee9(), {gs.data(), gs.data() + gs.size()},
                                           {ls.data(), ls.data() + ls.size()});
    const auto f = bus_features(op.solved);
    CHECK(Eigen::Map<const Eigen::RowVectorXd>(f.data(), 36) == ds.features.row(r));
    CHECK(static_cast<int>(run_fsa_tds(op.solved, ieee9_set()).safe) == ds.labels[static_cast<size_t>(r)]);
  }
}

TEST_CASE("identical seeds give bit-identical datasets") {
  const LabeledDataset a = generate_dataset(ieee9(), ieee9_set(), 12, 77);
  const LabeledDataset b = generate_dataset(ieee9(), ieee9_set(), 12, 77);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.gen_scale == b.gen_scale);
}

TEST_CASE("split sizes") {
  LabeledDataset big = blank(9950);
  split_dataset(big, 1);
  CHECK(big.rows_in(Split::Train).size() == 7463);
  CHECK(big.rows_in(Split::Val).size() == 1492);
  CHECK(big.rows_in(Split::Test).size() == 995);

  LabeledDataset small = blank(20);
  split_dataset(small, 1);
  CHECK(small.rows_in(Split::Train).size() == 15);
  CHECK(small.rows_in(Split::Val).size() == 3);
  CHECK(small.rows_in(Split::Test).size() == 2);
}

TEST_CASE("split is a deterministic partition") {
  LabeledDataset a = blank(500), b = blank(500), c = blank(500);
  split_dataset(a, 3);
  split_dataset(b, 3);
  split_dataset(c, 4);
  CHECK(a.split == b.split);
  CHECK(a.split != c.split);
  std::set<int> seen;
  for (auto s : {Split::Train, Split::Val, Split::Test})
    for (int r : a.rows_in(s)) CHECK(seen.insert(r).second);
  CHECK(seen.size() == 500);
}

TEST_CASE("masking") {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::LinSpaced(68 * 4, 1.0, 272.0);
  const Eigen::RowVectorXd orig = row;
  SUBCASE("fraction 0 leaves the row alone") {
    CHECK(mask_buses(row, 68, 0.0, 5).empty());
    CHECK(row == orig);
  }
  SUBCASE("a quarter of 68 buses is 17") {
    const auto m = mask_buses(row, 68, 0.25, 5);
    CHECK(m.size() == 17);
    CHECK(std::is_sorted(m.begin(), m.end()));
    // zeroed entries are exactly the mask's support
    for (int b = 0; b < 68; ++b) {
      const bool masked = std::binary_search(m.begin(), m.end(), b);
      for (int k = 0; k < 4; ++k) CHECK((row(4 * b + k) == 0.0) == masked);
    }
  }
  SUBCASE("dataset masking is per-row and reproducible") {
    RowMatrix x = RowMatrix::Ones(10, 36);
    const RowMatrix a = mask_dataset(x, 9, 0.25, 1);
    const RowMatrix b = mask_dataset(x, 9, 0.25, 1);
    CHECK(a == b);
    for (int r = 0; r < 10; ++r) CHECK((a.row(r).array() == 0.0).count() == 2 * 4);
  }
}

TEST_CASE("standardizer") {
  RowMatrix x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  const Standardizer s = Standardizer::fit(x, {0, 1, 2, 3});
  const RowMatrix z = s.apply(x);
  CHECK(z.col(0).mean() == doctest::Approx(0.0));
  CHECK(z.col(1).cwiseAbs().maxCoeff() == 0.0);  // constant column keeps unit scale
  CHECK(s.scale(1) == 1.0);
}

TEST_CASE("dataset files round-trip exactly") {
  LabeledDataset ds = ds200();
  split_dataset(ds, 8);
  const auto dir = gt::scratch("dataset_roundtrip");
  save_dataset(ds, dir);
  const LabeledDataset back = load_dataset(dir);
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK(back.split == ds.split);
  CHECK(back.binding == ds.binding);
  CHECK(back.load_scale == ds.load_scale);
  CHECK(back.seed == ds.seed);
}

}  // TEST_SUITE
