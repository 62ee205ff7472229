#include "gridshed/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gridshed/admittance.hpp"
#include "gridshed/errors.hpp"
#include "gridshed/optim.hpp"
#include "gridshed/util.hpp"

namespace gridshed {

std::string to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::Dt: return "dt";
    case ClassifierKind::Svm: return "svm";
    case ClassifierKind::Mlp: return "mlp";
    case ClassifierKind::Cnn: return "cnn";
    case ClassifierKind::Gnn: return "gnn";
  }
  return "dt";
}

ClassifierKind classifier_kind_from_string(const std::string& s) {
  if (s == "dt") return ClassifierKind::Dt;
  if (s == "svm") return ClassifierKind::Svm;
  if (s == "mlp") return ClassifierKind::Mlp;
  if (s == "cnn") return ClassifierKind::Cnn;
  if (s == "gnn") return ClassifierKind::Gnn;
  throw InvalidInput("unknown classifier kind '" + s + "'");
}

Eigen::VectorXd Classifier::predict_proba(const RowMatrix& features) const {
  if (features.cols() != 4 * n_bus_)
    throw InvalidInput("classifier expects " + std::to_string(4 * n_bus_) + " features, got " +
                       std::to_string(features.cols()));
  if (!uses_standardizer()) return proba_standardized(features);
  return proba_standardized(standardizer_.apply(features));
}

Eigen::VectorXd Classifier::predict_proba(const RowMatrix& features,
                                          const std::vector<std::vector<int>>& masks,
                                          MaskMode mode) const {
  if (mode == MaskMode::ZeroRaw) return predict_proba(features);
  if (features.cols() != 4 * n_bus_) throw InvalidInput("classifier input width mismatch");
  if (static_cast<Eigen::Index>(masks.size()) != features.rows())
    throw InvalidInput("one mask per row is required");
  RowMatrix z = uses_standardizer() ? standardizer_.apply(features) : features;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (int b : masks[static_cast<size_t>(r)]) {
      if (b < 0 || b >= n_bus_) throw InvalidInput("masked bus out of range");
      for (int f = 0; f < 4; ++f) {
        const int c = 4 * b + f;
        z(r, c) = uses_standardizer() ? 0.0 : standardizer_.mean(c);
      }
    }
  }
  return proba_standardized(z);
}

std::vector<int> Classifier::predict_labels(const RowMatrix& features) const {
  const Eigen::VectorXd p = predict_proba(features);
  std::vector<int> out(static_cast<size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<size_t>(i)] = p(i) >= 0.5 ? 1 : 0;
  return out;
}

void Classifier::save_common(Checkpoint& c) const {
  c.meta["kind"] = to_string(kind());
  c.meta["n_bus"] = n_bus_;
  c.add("std.mean", standardizer_.mean.transpose());
  c.add("std.scale", standardizer_.scale.transpose());
}

void Classifier::load_common(const Checkpoint& c) {
  n_bus_ = c.meta.at("n_bus").get<int>();
  standardizer_.mean = c.block("std.mean").transpose();
  standardizer_.scale = c.block("std.scale").transpose();
}

std::unique_ptr<Classifier> classifier_from_checkpoint(const Checkpoint& c) {
  const ClassifierKind kind = classifier_kind_from_string(c.meta.at("kind").get<std::string>());
  std::unique_ptr<Classifier> out;
  switch (kind) {
    case ClassifierKind::Dt: {
      auto t = std::make_unique<DecisionTree>();
      const auto& f = c.block("tree.feature");
      for (Eigen::Index i = 0; i < f.size(); ++i) {
        TreeNode nd;
        nd.feature = static_cast<int>(f(i));
        nd.threshold = c.block("tree.threshold")(i);
        nd.left = static_cast<int>(c.block("tree.left")(i));
        nd.right = static_cast<int>(c.block("tree.right")(i));
        nd.prob = c.block("tree.prob")(i);
        t->nodes_.push_back(nd);
      }
      out = std::move(t);
      break;
    }
    case ClassifierKind::Svm: {
      auto s = std::make_unique<LinearSvm>();
      s->w_ = c.block("svm.w");
      s->b_ = c.block("svm.b")(0);
      out = std::move(s);
      break;
    }
    default: {
      auto n = std::make_unique<NeuralClassifier>();
      n->kind_ = kind;
      n->net_ = Sequential(c.meta.at("layers").get<std::vector<LayerSpec>>());
      n->net_.params = c.block("net.params");
      if (n->net_.params.size() != n->net_.param_count())
        throw InvalidInput("checkpoint parameter count does not match its layers");
      if (kind == ClassifierKind::Gnn) {
        const int nb = c.meta.at("n_bus").get<int>();
        n->agg_node_ = c.meta.at("aggregation_node").get<int>();
        n->n_max_ = c.meta.at("n_max").get<int>();
        n->shift_ = Eigen::Map<const RowMatrix>(c.block("gnn.shift").data(), nb, nb);
        n->input_std_.mean = c.block("gnn.in_mean").transpose();
        n->input_std_.scale = c.block("gnn.in_scale").transpose();
      }
      out = std::move(n);
    }
  }
  out->load_common(c);
  return out;
}

void save_classifier(const Classifier& model, const std::filesystem::path& dir) {
  save_checkpoint(model.to_checkpoint(), dir);
}

std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& dir) {
  return classifier_from_checkpoint(load_checkpoint(dir));
}

Metrics confusion_metrics(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || truth.empty())
    throw InvalidInput("metrics need equal-length, non-empty label vectors");
  Metrics m;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] && truth[i]) ++m.tp;
    else if (!predicted[i] && !truth[i]) ++m.tn;
    else if (predicted[i]) ++m.fp;
    else ++m.fn;
  }
  const double n = static_cast<double>(truth.size());
  m.accuracy = 100.0 * (m.tp + m.tn) / n;
  m.degenerate = (m.tp + m.fp) == 0;
  m.precision = m.degenerate ? 0.0 : 100.0 * m.tp / (m.tp + m.fp);
  m.recall = (m.tp + m.fn) == 0 ? 0.0 : 100.0 * m.tp / (m.tp + m.fn);
  return m;
}

Metrics evaluate(const Classifier& model, const LabeledDataset& ds, const std::vector<int>& rows) {
  if (rows.empty()) throw InvalidInput("evaluation split is empty");
  const LabeledDataset sub = ds.subset(rows);
  Stopwatch sw;
  const std::vector<int> pred = model.predict_labels(sub.features);
  const double t = sw.seconds();
  Metrics m = confusion_metrics(pred, sub.labels);
  m.test_time = t;
  return m;
}

namespace {

double logits_loss(const Sequential& net, const Batch& x, const Eigen::VectorXd& y,
                   Eigen::VectorXd* grad) {
  ForwardCache cache;
  net.forward(x, &cache);
  const Batch& logits = cache.inputs.back();  // input of the sigmoid head
  const LossGrad lg = bce_with_logits(Eigen::Map<const Eigen::VectorXd>(logits.data(), logits.rows()), y);
  if (grad) {
    grad->setZero(net.param_count());
    net.backward(cache, Eigen::Map<const Batch>(lg.grad.data(), lg.grad.size(), 1), *grad,
                 net.specs().size() - 1);
  }
  return lg.loss;
}

std::unique_ptr<NeuralClassifier> train_neural(ClassifierKind kind, const LabeledDataset& ds,
                                               const Network& net,
                                               const std::vector<int>& train,
                                               const std::vector<int>& val,
                                               const ClassifierTrainOptions& opts,
                                               TrainHistory& hist) {
  Eigen::MatrixXd shift;
  int node = 0;
  if (kind == ClassifierKind::Gnn) {
    if (net.bus_count() != ds.n_bus) throw InvalidInput("gnn topology does not match the dataset");
    shift = graph_shift_operator(net, ShiftKind::AdmittanceWeighted);
    node = aggregation_node(net);
  }
  auto model = NeuralClassifier::make(kind, ds.n_bus, shift, node, opts.gnn_n_max);
  model->set_standardizer(Standardizer::fit(ds.features, train));
  if (kind == ClassifierKind::Gnn) {
    // input standardizer not set yet, so this is the raw aggregation sequence
    model->set_input_standardizer(Standardizer::fit(model->network_input(ds.features), train));
  }
  const Batch x_all = model->network_input(ds.features);
  auto gather = [&](const std::vector<int>& rows, Batch& x, Eigen::VectorXd& y) {
    x.resize(static_cast<Eigen::Index>(rows.size()), x_all.cols());
    y.resize(static_cast<Eigen::Index>(rows.size()));
    for (size_t k = 0; k < rows.size(); ++k) {
      x.row(static_cast<Eigen::Index>(k)) = x_all.row(rows[k]);
      y(static_cast<Eigen::Index>(k)) = ds.labels[static_cast<size_t>(rows[k])];
    }
  };
  Batch xv;
  Eigen::VectorXd yv;
  gather(val, xv, yv);

  Rng init_rng(derive_seed(opts.seed, "init"));
  Sequential& nn = model->net();
  nn.init(init_rng);
  Rng shuffle_rng(derive_seed(opts.seed, "shuffle"));
  AdamState adam(nn.param_count(), opts.lr);
  Eigen::VectorXd best = nn.params;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<int> order = train;
  Eigen::VectorXd grad;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(opts.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(opts.batch_size));
      Batch xb;
      Eigen::VectorXd yb;
      gather(std::vector<int>(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end)), xb, yb);
      const double loss = logits_loss(nn, xb, yb, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw TrainingDiverged(to_string(kind) + " training loss became non-finite", epoch);
      total += loss * static_cast<double>(end - start);
      adam_step(adam, nn.params, grad);
    }
    hist.train_loss.push_back(total / static_cast<double>(order.size()));
    const double vloss = val.empty() ? hist.train_loss.back() : logits_loss(nn, xv, yv, nullptr);
    if (!std::isfinite(vloss)) throw TrainingDiverged("validation loss became non-finite", epoch);
    hist.val_loss.push_back(vloss);
    if (vloss < best_val) {
      best_val = vloss;
      best = nn.params;
      hist.best_epoch = epoch;
    }
  }
  nn.params = best;
  return model;
}

}  // namespace

std::unique_ptr<Classifier> train_classifier(ClassifierKind kind, const LabeledDataset& ds,
                                             const Network& net,
                                             const ClassifierTrainOptions& opts,
                                             TrainHistory* history) {
  ds.validate();
  if (ds.split.empty()) throw InvalidInput("dataset has no split tags");
  const std::vector<int> train = ds.rows_in(Split::Train);
  const std::vector<int> val = ds.rows_in(Split::Val);
  if (train.empty()) throw InvalidInput("training split is empty");
  TrainHistory local;
  TrainHistory& hist = history ? *history : local;
  hist = {};
  Stopwatch sw;
  std::unique_ptr<Classifier> out;
  switch (kind) {
    case ClassifierKind::Dt: {
      const LabeledDataset sub = ds.subset(train);
      out = DecisionTree::fit(sub.features, sub.labels, ds.n_bus, opts.dt_max_depth, opts.dt_min_leaf);
      break;
    }
    case ClassifierKind::Svm: {
      const LabeledDataset sub = ds.subset(train);
      auto svm = LinearSvm::fit(sub.features, sub.labels, ds.n_bus, opts.svm_epochs, opts.svm_lr,
                                opts.svm_lambda, derive_seed(opts.seed, "svm"));
      hist.train_loss = svm->objective();
      out = std::move(svm);
      break;
    }
    default: out = train_neural(kind, ds, net, train, val, opts, hist);
  }
  hist.seconds = sw.seconds();
  return out;
}

}  // namespace gridshed
