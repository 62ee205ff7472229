#include "gridshed/classifier.hpp"
#include "gridshed/errors.hpp"

namespace gridshed {

Eigen::MatrixXd aggregate_signal(const Eigen::MatrixXd& S, const Eigen::MatrixXd& x, int node,
                                 int n_max) {
  if (S.rows() != S.cols()) throw InvalidInput("shift operator must be square");
  if (x.rows() != S.rows()) throw InvalidInput("graph signal length does not match S");
  if (node < 0 || node >= S.rows()) throw InvalidInput("aggregation node out of range");
  if (n_max < 1) throw InvalidInput("n_max must be at least 1");
  Eigen::MatrixXd z(n_max, x.cols());
  Eigen::MatrixXd power = x;
  for (int k = 0; k < n_max; ++k) {
    z.row(k) = power.row(node);
    if (k + 1 < n_max) power = S * power;
  }
  return z;
}

int aggregation_node(const Network& net) {
  const auto adj = adjacency_lists(net);
  int best = 0;
  for (int b = 1; b < static_cast<int>(adj.size()); ++b)
    if (adj[static_cast<size_t>(b)].size() > adj[static_cast<size_t>(best)].size()) best = b;
  return best;
}

}  // namespace gridshed
