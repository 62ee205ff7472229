#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridshed/classifier.hpp"
#include "gridshed/errors.hpp"

namespace gridshed {

std::unique_ptr<LinearSvm> LinearSvm::fit(const RowMatrix& x, const std::vector<int>& y,
                                          int n_bus, int epochs, double lr, double lambda,
                                          std::uint64_t seed, bool standardize) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()) || y.empty())
    throw InvalidInput("svm: feature/label size mismatch");
  auto svm = std::make_unique<LinearSvm>();
  svm->n_bus_ = n_bus;
  std::vector<int> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  if (standardize) {
    svm->standardizer_ = Standardizer::fit(x, order);
  } else {
    svm->standardizer_.mean = Eigen::RowVectorXd::Zero(x.cols());
    svm->standardizer_.scale = Eigen::RowVectorXd::Ones(x.cols());
  }
  const RowMatrix z = svm->standardizer_.apply(x);
  svm->w_ = Eigen::VectorXd::Zero(x.cols());
  svm->b_ = 0.0;
  Rng rng(seed);
  const double m = static_cast<double>(y.size());
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    const double step = lr / std::sqrt(1.0 + e);
    for (int r : order) {
      const double t = y[static_cast<size_t>(r)] ? 1.0 : -1.0;
      const double margin = t * (z.row(r).dot(svm->w_) + svm->b_);
      svm->w_ *= (1.0 - step * lambda);
      if (margin < 1.0) {
        svm->w_ += step * t * z.row(r).transpose();
        svm->b_ += step * t;
      }
    }
    double obj = 0.5 * lambda * svm->w_.squaredNorm();
    const Eigen::VectorXd f = svm->margins(z);
    for (Eigen::Index r = 0; r < f.size(); ++r) {
      const double t = y[static_cast<size_t>(r)] ? 1.0 : -1.0;
      obj += std::max(0.0, 1.0 - t * f(r)) / m;
    }
    svm->objective_.push_back(obj);
  }
  return svm;
}

Eigen::VectorXd LinearSvm::margins(const RowMatrix& z) const {
  return (z * w_).array() + b_;
}

Eigen::VectorXd LinearSvm::proba_standardized(const RowMatrix& z) const {
  return margins(z).unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
}

Checkpoint LinearSvm::to_checkpoint() const {
  Checkpoint c;
  save_common(c);
  c.add("svm.w", w_);
  c.add("svm.b", Eigen::VectorXd::Constant(1, b_));
  return c;
}

}  // namespace gridshed
