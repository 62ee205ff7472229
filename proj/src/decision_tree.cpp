#include <algorithm>
#include <numeric>

#include "gridshed/classifier.hpp"
#include "gridshed/errors.hpp"

namespace gridshed {

namespace {

struct Builder {
  const RowMatrix& x;
  const std::vector<int>& y;
  int max_depth;
  int min_leaf;
  std::vector<TreeNode> nodes;

  static double gini(double pos, double n) {
    if (n <= 0) return 0.0;
    const double p = pos / n;
    return 2.0 * p * (1.0 - p);
  }

  int build(std::vector<int>& rows, int depth) {
    const int idx = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double pos = 0;
    for (int r : rows) pos += y[static_cast<size_t>(r)];
    const double n = static_cast<double>(rows.size());
    nodes[static_cast<size_t>(idx)].prob = pos / n;
    if (depth >= max_depth || pos == 0 || pos == n ||
        static_cast<int>(rows.size()) < 2 * min_leaf)
      return idx;

    const double parent = gini(pos, n);
    // zero-gain splits are allowed on impure nodes (XOR has no first split
    // that helps on its own)
    double best_gain = -1e-12;
    int best_f = -1;
    double best_thr = 0.0;
    std::vector<std::pair<double, int>> order(rows.size());
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      for (size_t k = 0; k < rows.size(); ++k) order[k] = {x(rows[k], f), y[static_cast<size_t>(rows[k])]};
      std::sort(order.begin(), order.end());
      double left_pos = 0;
      for (size_t k = 0; k + 1 < order.size(); ++k) {
        left_pos += order[k].second;
        const auto nl = static_cast<double>(k + 1);
        if (order[k].first == order[k + 1].first) continue;
        if (nl < min_leaf || n - nl < min_leaf) continue;
        const double child = (nl * gini(left_pos, nl) + (n - nl) * gini(pos - left_pos, n - nl)) / n;
        const double gain = parent - child;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_thr = 0.5 * (order[k].first + order[k + 1].first);
        }
      }
    }
    if (best_f < 0) return idx;

    std::vector<int> left, right;
    for (int r : rows) (x(r, best_f) <= best_thr ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    auto& node = nodes[static_cast<size_t>(idx)];
    node.feature = best_f;
    node.threshold = best_thr;
    node.left = l;
    node.right = r;
    return idx;
  }
};

}  // namespace

std::unique_ptr<DecisionTree> DecisionTree::fit(const RowMatrix& x, const std::vector<int>& y,
                                                int n_bus, int max_depth, int min_leaf) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()) || y.empty())
    throw InvalidInput("decision tree: feature/label size mismatch");
  if (max_depth < 0 || min_leaf < 1) throw InvalidInput("decision tree: bad depth/leaf limits");
  Builder b{x, y, max_depth, min_leaf, {}};
  std::vector<int> rows(y.size());
  std::iota(rows.begin(), rows.end(), 0);
  b.build(rows, 0);
  auto tree = std::make_unique<DecisionTree>();
  tree->nodes_ = std::move(b.nodes);
  tree->n_bus_ = n_bus;
  std::vector<int> all(y.size());
  std::iota(all.begin(), all.end(), 0);
  tree->standardizer_ = Standardizer::fit(x, all);  // used only to impute masked entries
  return tree;
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes_[i].feature >= 0) {
      d[static_cast<size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

Eigen::VectorXd DecisionTree::proba_standardized(const RowMatrix& x) const {
  Eigen::VectorXd p(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    int i = 0;
    while (nodes_[static_cast<size_t>(i)].feature >= 0) {
      const auto& nd = nodes_[static_cast<size_t>(i)];
      i = x(r, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    p(r) = nodes_[static_cast<size_t>(i)].prob;
  }
  return p;
}

Checkpoint DecisionTree::to_checkpoint() const {
  Checkpoint c;
  save_common(c);
  const auto n = static_cast<Eigen::Index>(nodes_.size());
  Eigen::VectorXd f(n), t(n), l(n), r(n), p(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nd = nodes_[static_cast<size_t>(i)];
    f(i) = nd.feature;
    t(i) = nd.threshold;
    l(i) = nd.left;
    r(i) = nd.right;
    p(i) = nd.prob;
  }
  c.add("tree.feature", f);
  c.add("tree.threshold", t);
  c.add("tree.left", l);
  c.add("tree.right", r);
  c.add("tree.prob", p);
  c.meta["max_depth_reached"] = depth();
  return c;
}

}  // namespace gridshed
