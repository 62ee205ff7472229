#include <cmath>

#include "gridshed/classifier.hpp"
#include "gridshed/errors.hpp"

namespace gridshed {

std::vector<LayerSpec> NeuralClassifier::architecture(ClassifierKind kind, int n_bus, int n_max) {
  std::vector<LayerSpec> a;
  switch (kind) {
    case ClassifierKind::Mlp:
      a = {LayerSpec::dense(4 * n_bus, 128), LayerSpec::relu(128), LayerSpec::dense(128, 64),
           LayerSpec::relu(64), LayerSpec::dense(64, 1)};
      break;
    case ClassifierKind::Cnn: {
      // four conv + pool stages over the bus axis, 4 input channels
      int len = n_bus, ch = 4;
      for (int out : {8, 16, 32, 64}) {
        a.push_back(LayerSpec::conv1d(len, ch, out, 3, 1, 1));
        a.push_back(LayerSpec::relu(len * out));
        a.push_back(LayerSpec::maxpool1d(len, out, 2, true));
        len = (len + 1) / 2;
        ch = out;
      }
      a.push_back(LayerSpec::dense(len * ch, 64));
      a.push_back(LayerSpec::relu(64));
      a.push_back(LayerSpec::dense(64, 1));
      break;
    }
    case ClassifierKind::Gnn: {
      if (n_max < 2) throw InvalidInput("gnn needs n_max >= 2 for its kernel-2 convolution");
      const int flat = (n_max - 1) * 16;
      a = {LayerSpec::conv1d(n_max, 4, 16, 2), LayerSpec::relu(flat), LayerSpec::dense(flat, 32),
           LayerSpec::relu(32), LayerSpec::dense(32, 1)};
      break;
    }
    default: throw InvalidInput("not a neural classifier kind");
  }
  a.push_back(LayerSpec::sigmoid(1));
  return a;
}

std::unique_ptr<NeuralClassifier> NeuralClassifier::make(ClassifierKind kind, int n_bus,
                                                         const Eigen::MatrixXd& shift, int node,
                                                         int n_max) {
  auto m = std::make_unique<NeuralClassifier>();
  m->kind_ = kind;
  m->n_bus_ = n_bus;
  if (kind == ClassifierKind::Gnn) {
    if (shift.rows() != n_bus || shift.cols() != n_bus)
      throw InvalidInput("gnn shift operator must be N x N");
    if (node < 0 || node >= n_bus) throw InvalidInput("aggregation node out of range");
    m->shift_ = shift;
    m->agg_node_ = node;
    m->n_max_ = n_max;
  }
  m->net_ = Sequential(architecture(kind, n_bus, n_max));
  return m;
}

Batch NeuralClassifier::prepare(const RowMatrix& z) const {
  if (kind_ != ClassifierKind::Gnn) return z;
  // rows of A are e_node^T S^k, so A * X is the aggregation sequence of X
  Eigen::MatrixXd a(n_max_, n_bus_);
  Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n_bus_);
  e(agg_node_) = 1.0;
  for (int k = 0; k < n_max_; ++k) {
    a.row(k) = e;
    e = e * shift_;
  }
  Batch out(z.rows(), 4 * n_max_);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    Eigen::Map<const RowMatrix> x(z.row(r).data(), n_bus_, 4);
    const RowMatrix seq = a * x;
    out.row(r) = Eigen::Map<const Eigen::RowVectorXd>(seq.data(), 4 * n_max_);
  }
  return input_std_.mean.size() ? Batch(input_std_.apply(out)) : out;
}

Batch NeuralClassifier::network_input(const RowMatrix& features) const {
  return prepare(standardizer_.apply(features));
}

Eigen::VectorXd NeuralClassifier::proba_standardized(const RowMatrix& z) const {
  const Batch y = net_.forward(prepare(z));
  return Eigen::Map<const Eigen::VectorXd>(y.data(), y.rows());
}

Checkpoint NeuralClassifier::to_checkpoint() const {
  Checkpoint c;
  save_common(c);
  c.meta["layers"] = net_.specs();
  c.add("net.params", net_.params);
  if (kind_ == ClassifierKind::Gnn) {
    c.meta["aggregation_node"] = agg_node_;
    c.meta["n_max"] = n_max_;
    RowMatrix s = shift_;
    c.add("gnn.shift", Eigen::Map<const Eigen::VectorXd>(s.data(), s.size()));
    c.add("gnn.in_mean", input_std_.mean.transpose());
    c.add("gnn.in_scale", input_std_.scale.transpose());
  }
  return c;
}

}  // namespace gridshed
