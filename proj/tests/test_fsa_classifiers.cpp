#include <doctest.h>

#include <random>

#include "gridshed/admittance.hpp"
#include "gridshed/classifier.hpp"
#include "gridshed/errors.hpp"
#include "gridshed/power_flow.hpp"
#include "helpers.hpp"

using namespace gridshed;

namespace {

// Single-bus rows: 4 feature columns per row.
RowMatrix rows4(const std::vector<std::array<double, 4>>& r) {
  RowMatrix x(static_cast<Eigen::Index>(r.size()), 4);
  for (size_t i = 0; i < r.size(); ++i)
    for (int k = 0; k < 4; ++k) x(static_cast<Eigen::Index>(i), k) = r[i][static_cast<size_t>(k)];
  return x;
}

double train_accuracy(const Classifier& m, const RowMatrix& x, const std::vector<int>& y) {
  const auto p = m.predict_labels(x);
  int ok = 0;
  for (size_t i = 0; i < y.size(); ++i) ok += p[i] == y[i];
  return 100.0 * ok / static_cast<double>(y.size());
}

// Random dataset on the 9-bus shape with a label from a simple rule.
LabeledDataset synthetic9(int m, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  LabeledDataset ds;
  ds.n_bus = 9;
  ds.features.resize(m, 36);
  for (Eigen::Index i = 0; i < ds.features.size(); ++i) ds.features.data()[i] = n01(rng);
  for (int r = 0; r < m; ++r) ds.labels.push_back(ds.features(r, 2) + ds.features(r, 6) > 0.0);
  ds.binding.assign(static_cast<size_t>(m), -1);
  ds.gen_scale = RowMatrix::Ones(m, 3);
  ds.load_scale = RowMatrix::Ones(m, 3);
  split_dataset(ds, seed);
  return ds;
}

}  // namespace

TEST_SUITE("fsa_classifiers") {

TEST_CASE("aggregation examples") {
  const Eigen::MatrixXd s = graph_shift_operator(gt::path_network(3), ShiftKind::Adjacency);
  Eigen::MatrixXd x(3, 1);
  x << 1, 0, 0;
  SUBCASE("n_max 1 is the node's own value") {
    const Eigen::MatrixXd z = aggregate_signal(s, x, 0, 1);
    CHECK(z.rows() == 1);
    CHECK(z(0, 0) == 1.0);
  }
  SUBCASE("3-bus path, node 0") {
    const Eigen::MatrixXd z = aggregate_signal(s, x, 0, 3);
    CHECK(z(0, 0) == 1.0);
    CHECK(z(1, 0) == 0.0);
    CHECK(z(2, 0) == 1.0);
  }
  SUBCASE("zero shift") {
    Eigen::MatrixXd y(3, 1);
    y << 4, 5, 6;
    const Eigen::MatrixXd z = aggregate_signal(Eigen::MatrixXd::Zero(3, 3), y, 0, 3);
    CHECK(z(0, 0) == 4.0);
    CHECK(z(1, 0) == 0.0);
    CHECK(z(2, 0) == 0.0);
  }
  CHECK_THROWS_AS(aggregate_signal(s, x, 3, 2), InvalidInput);
}

TEST_CASE("aggregation is linear") {
  const Network net = load_network(bundled_case("ieee39"));
  const Eigen::MatrixXd s = graph_shift_operator(net);
  Rng rng(1);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 10; ++t) {
    Eigen::MatrixXd x(39, 4), y(39, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x.data()[i] = n01(rng);
      y.data()[i] = n01(rng);
    }
    const double a = n01(rng), b = n01(rng);
    const int node = aggregation_node(net);
    const Eigen::MatrixXd lhs = aggregate_signal(s, a * x + b * y, node, 3);
    const Eigen::MatrixXd rhs = a * aggregate_signal(s, x, node, 3) + b * aggregate_signal(s, y, node, 3);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("aggregation sees only the 2-hop neighbourhood") {
  const Network net = solved(load_network(bundled_case("ieee39")));
  const int node = aggregation_node(net);
  const auto hops = hop_distances(net, node);
  Rng rng(2);
  std::normal_distribution<double> n01;
  RowMatrix x(4, 39 * 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
  RowMatrix cut = x;
  for (int b = 0; b < 39; ++b)
    if (hops[static_cast<size_t>(b)] > 2) cut.middleCols(4 * b, 4).setZero();

  const Eigen::MatrixXd s = graph_shift_operator(net);
  for (int r = 0; r < 4; ++r) {
    const Eigen::MatrixXd xr = Eigen::Map<const RowMatrix>(x.row(r).data(), 39, 4);
    const Eigen::MatrixXd cr = Eigen::Map<const RowMatrix>(cut.row(r).data(), 39, 4);
    CHECK(aggregate_signal(s, xr, node, 3) == aggregate_signal(s, cr, node, 3));
  }

  // the GNN input itself, after its own standardization
  auto gnn = NeuralClassifier::make(ClassifierKind::Gnn, 39, s, node, 3);
  gnn->set_standardizer({Eigen::RowVectorXd::Zero(156), Eigen::RowVectorXd::Ones(156)});
  CHECK(gnn->network_input(x) == gnn->network_input(cut));
}

TEST_CASE("aggregation node is the highest-degree bus") {
  const Network net = load_network(bundled_case("ieee39"));
  const auto adj = adjacency_lists(net);
  const int node = aggregation_node(net);
  for (const auto& a : adj) CHECK(a.size() <= adj[static_cast<size_t>(node)].size());
}

TEST_CASE("decision tree examples") {
  SUBCASE("threshold-separable: one split") {
    const RowMatrix x = rows4({{0, 1, 0, 0}, {0, 2, 0, 0}, {0, 3, 0, 0}, {0, 7, 0, 0}, {0, 8, 0, 0}, {0, 9, 0, 0}});
    const std::vector<int> y{0, 0, 0, 1, 1, 1};
    const auto t = DecisionTree::fit(x, y, 1, 12, 1);
    CHECK(t->depth() == 1);
    CHECK(train_accuracy(*t, x, y) == 100.0);
    CHECK(t->nodes()[0].feature == 1);
    CHECK(t->nodes()[0].threshold == 5.0);
  }
  SUBCASE("pure class: one leaf that always answers it") {
    const RowMatrix x = rows4({{1, 2, 3, 4}, {4, 3, 2, 1}, {0, 0, 0, 0}});
    const auto t = DecisionTree::fit(x, {1, 1, 1}, 1, 12, 1);
    CHECK(t->nodes().size() == 1);
    const RowMatrix other = rows4({{-50, 9, 9, 9}, {100, 0, -3, 2}});
    CHECK(t->predict_labels(other) == std::vector<int>{1, 1});
  }
  SUBCASE("XOR needs depth 2") {
    const RowMatrix x = rows4({{0, 0, 0, 0}, {0, 1, 0, 0}, {1, 0, 0, 0}, {1, 1, 0, 0}});
    const std::vector<int> y{0, 1, 1, 0};
    const auto t = DecisionTree::fit(x, y, 1, 2, 1);
    CHECK(train_accuracy(*t, x, y) == 100.0);
    CHECK(t->depth() == 2);
    const auto stump = DecisionTree::fit(x, y, 1, 1, 1);
    CHECK(train_accuracy(*stump, x, y) < 100.0);
  }
  SUBCASE("depth and leaf limits hold") {
    const LabeledDataset ds = synthetic9(300, 3);
    const auto t = DecisionTree::fit(ds.features, ds.labels, 9, 4, 10);
    CHECK(t->depth() <= 4);
  }
}

TEST_CASE("linear SVM examples") {
  SUBCASE("two separable points") {
    const RowMatrix x = rows4({{-1, 0, 0, 0}, {1, 0, 0, 0}});
    const std::vector<int> y{0, 1};
    const auto s = LinearSvm::fit(x, y, 1, 200, 0.1, 1e-3, 1);
    CHECK(s->predict_labels(x) == y);
    const Eigen::VectorXd m = s->margins(x);
    CHECK(m(0) < 0.0);
    CHECK(m(1) > 0.0);
  }
  SUBCASE("identical features fall back to the majority") {
    const RowMatrix x = RowMatrix::Constant(7, 4, 0.5);
    const std::vector<int> y{1, 1, 1, 1, 1, 0, 0};
    const auto s = LinearSvm::fit(x, y, 1, 200, 0.1, 1e-3, 1);
    CHECK(s->predict_labels(x) == std::vector<int>(7, 1));
    CHECK(s->bias() > 0.0);
  }
  SUBCASE("2-D blobs 4 sigma apart on each axis") {
    Rng rng(5);
    std::normal_distribution<double> n01;
    auto blobs = [&](int m, RowMatrix& x, std::vector<int>& y) {
      x.resize(m, 4);
      y.clear();
      for (int r = 0; r < m; ++r) {
        const int c = r % 2;
        const double mu = c ? 2.0 : -2.0;
        x.row(r) << mu + n01(rng), mu + n01(rng), 0.0, 0.0;
        y.push_back(c);
      }
    };
    RowMatrix xt, xe;
    std::vector<int> yt, ye;
    blobs(400, xt, yt);
    blobs(4000, xe, ye);
    const auto s = LinearSvm::fit(xt, yt, 1, 200, 0.1, 1e-3, 2);
    // Bayes accuracy is Phi(2 sqrt 2) = 99.77%
    CHECK(train_accuracy(*s, xe, ye) >= 99.0);
  }
}

TEST_CASE("network input shapes on a 68-bus grid") {
  CHECK(NeuralClassifier::architecture(ClassifierKind::Mlp, 68).front().input_size() == 272);
  CHECK(NeuralClassifier::architecture(ClassifierKind::Cnn, 68).front().input_size() == 68 * 4);
  const auto gnn = NeuralClassifier::architecture(ClassifierKind::Gnn, 68);
  CHECK(gnn.front().input_size() == 3 * 4);
  CHECK(gnn.front().length == 3);
  CHECK(gnn.front().channels == 4);
  CHECK(NeuralClassifier::architecture(ClassifierKind::Cnn, 68).back().output_size() == 1);
}

TEST_CASE("one-epoch training and exact checkpoint round-trip") {
  const Network net = solved(load_network(bundled_case("ieee9")));
  const LabeledDataset ds = synthetic9(20, 7);
  ClassifierTrainOptions o;
  o.epochs = 1;
  o.seed = 3;
  for (auto kind : {ClassifierKind::Dt, ClassifierKind::Svm, ClassifierKind::Mlp, ClassifierKind::Cnn,
                    ClassifierKind::Gnn}) {
    CAPTURE(to_string(kind));
    const auto model = train_classifier(kind, ds, net, o);
    const auto dir = gt::scratch("cls_" + to_string(kind));
    save_classifier(*model, dir / "a");
    const auto back = load_classifier(dir / "a");
    save_classifier(*back, dir / "b");
    for (const char* f : {"manifest.json", "params.bin"}) {
      REQUIRE(std::filesystem::exists(dir / "a" / f));
      CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
    }
    const Eigen::VectorXd p = model->predict_proba(ds.features);
    CHECK(back->predict_proba(ds.features) == p);
    // repeat calls are identical and valid probabilities
    CHECK(model->predict_proba(ds.features) == p);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.maxCoeff() <= 1.0);
  }
}

TEST_CASE("neural classifiers learn a simple rule") {
  const Network net = solved(load_network(bundled_case("ieee9")));
  const LabeledDataset ds = synthetic9(600, 8);
  ClassifierTrainOptions o;
  o.epochs = 30;
  o.seed = 1;
  TrainHistory h;
  const auto mlp = train_classifier(ClassifierKind::Mlp, ds, net, o, &h);
  CHECK(evaluate(*mlp, ds, ds.rows_in(Split::Test)).accuracy >= 90.0);
  CHECK(h.best_epoch >= 0);
  CHECK(h.train_loss.front() > h.train_loss.back());
}

TEST_CASE("training is reproducible per seed") {
  const Network net = solved(load_network(bundled_case("ieee9")));
  const LabeledDataset ds = synthetic9(80, 9);
  ClassifierTrainOptions o;
  o.epochs = 3;
  o.seed = 4;
  for (auto kind : {ClassifierKind::Svm, ClassifierKind::Cnn, ClassifierKind::Gnn}) {
    const auto a = train_classifier(kind, ds, net, o);
    const auto b = train_classifier(kind, ds, net, o);
    CHECK(a->predict_proba(ds.features) == b->predict_proba(ds.features));
  }
}

TEST_CASE("metrics") {
  SUBCASE("perfect predictor") {
    const std::vector<int> y{1, 0, 1, 1, 0};
    const Metrics m = confusion_metrics(y, y);
    CHECK(m.accuracy == 100.0);
    CHECK(m.precision == 100.0);
    CHECK(m.recall == 100.0);
  }
  SUBCASE("all-positive on 65/35") {
    std::vector<int> truth(100, 0);
    std::fill(truth.begin(), truth.begin() + 65, 1);
    const Metrics m = confusion_metrics(std::vector<int>(100, 1), truth);
    CHECK(m.accuracy == doctest::Approx(65.0));
    CHECK(m.recall == 100.0);
    CHECK(m.precision == doctest::Approx(65.0));
  }
  SUBCASE("hand confusion matrix on ten predictions") {
    const std::vector<int> pred{1, 1, 1, 0, 0, 1, 0, 1, 0, 0};
    const std::vector<int> truth{1, 0, 1, 0, 1, 1, 0, 0, 0, 1};
    const Metrics m = confusion_metrics(pred, truth);
    CHECK(m.tp == 3);
    CHECK(m.fp == 2);
    CHECK(m.tn == 3);
    CHECK(m.fn == 2);
    CHECK(m.accuracy == doctest::Approx(100.0 * (m.tp + m.tn) / 10));
    CHECK(m.precision / 100.0 * 5 == doctest::Approx(m.tp));
    CHECK(m.recall == doctest::Approx(60.0));
  }
  SUBCASE("no positive predictions is flagged") {
    const Metrics m = confusion_metrics({0, 0}, {1, 0});
    CHECK(m.degenerate);
    CHECK(m.precision == 0.0);
  }
}

TEST_CASE("masked prediction modes") {
  const Network net = solved(load_network(bundled_case("ieee9")));
  const LabeledDataset ds = synthetic9(60, 10);
  ClassifierTrainOptions o;
  o.epochs = 2;
  const auto cnn = train_classifier(ClassifierKind::Cnn, ds, net, o);
  RowMatrix x = ds.features;
  std::vector<std::vector<int>> masks(static_cast<size_t>(x.rows()));
  // empty masks change nothing in either mode
  CHECK(cnn->predict_proba(x, masks, MaskMode::ZeroRaw) == cnn->predict_proba(x));
  CHECK(cnn->predict_proba(x, masks, MaskMode::ZeroStandardized) == cnn->predict_proba(x));
  for (auto& m : masks) m = {0, 4};
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    x.block(r, 0, 1, 4).setZero();
    x.block(r, 16, 1, 4).setZero();
  }
  CHECK(cnn->predict_proba(x, masks, MaskMode::ZeroRaw) == cnn->predict_proba(x));
}

TEST_CASE("unknown classifier names are rejected") {
  CHECK_THROWS_AS(classifier_kind_from_string("forest"), InvalidInput);
  CHECK(classifier_kind_from_string("gnn") == ClassifierKind::Gnn);
}

}  // TEST_SUITE
