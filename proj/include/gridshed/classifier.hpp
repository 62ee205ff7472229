#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridshed/checkpoint.hpp"
#include "gridshed/dataset.hpp"
#include "gridshed/network.hpp"
#include "gridshed/tensor.hpp"

namespace gridshed {

// ---- aggregation ---------------------------------------------------------

/// Row k of the result is [S^k x]_node for every feature column of `x`
/// (N x F), k = 0 .. n_max - 1.
Eigen::MatrixXd aggregate_signal(const Eigen::MatrixXd& S, const Eigen::MatrixXd& x, int node,
                                 int n_max);

/// Highest-degree bus over in-service lines; ties go to the lowest id.
int aggregation_node(const Network& net);

// ---- classifiers ---------------------------------------------------------

enum class ClassifierKind { Dt, Svm, Mlp, Cnn, Gnn };
std::string to_string(ClassifierKind k);
ClassifierKind classifier_kind_from_string(const std::string& s);

/// How predict() treats masked buses. ZeroRaw feeds the zero-filled raw
/// features as they are; ZeroStandardized additionally places masked
/// entries at zero after standardization (the training mean).
enum class MaskMode { ZeroRaw, ZeroStandardized };

/// Every classifier consumes raw per-bus feature rows (M x 4N) and returns
/// P(safe) per row.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual ClassifierKind kind() const = 0;
  int n_bus() const { return n_bus_; }

  Eigen::VectorXd predict_proba(const RowMatrix& features) const;
  /// `masks[r]` lists the masked buses of row r (may be empty).
  Eigen::VectorXd predict_proba(const RowMatrix& features,
                                const std::vector<std::vector<int>>& masks,
                                MaskMode mode) const;
  std::vector<int> predict_labels(const RowMatrix& features) const;

  virtual Checkpoint to_checkpoint() const = 0;

 protected:
  /// Rows are already standardized (tree models receive raw rows).
  virtual Eigen::VectorXd proba_standardized(const RowMatrix& z) const = 0;
  virtual bool uses_standardizer() const { return true; }

  int n_bus_ = 0;
  Standardizer standardizer_;

  friend std::unique_ptr<Classifier> classifier_from_checkpoint(const Checkpoint&);
  void save_common(Checkpoint& c) const;
  void load_common(const Checkpoint& c);
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double prob = 0.0;  // safe fraction of the training rows that reached it
};

class DecisionTree : public Classifier {
 public:
  ClassifierKind kind() const override { return ClassifierKind::Dt; }
  Checkpoint to_checkpoint() const override;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int depth() const;

  static std::unique_ptr<DecisionTree> fit(const RowMatrix& x, const std::vector<int>& y,
                                           int n_bus, int max_depth, int min_leaf);

 protected:
  Eigen::VectorXd proba_standardized(const RowMatrix& x) const override;
  bool uses_standardizer() const override { return false; }

 private:
  friend std::unique_ptr<Classifier> classifier_from_checkpoint(const Checkpoint&);
  std::vector<TreeNode> nodes_;
};

class LinearSvm : public Classifier {
 public:
  ClassifierKind kind() const override { return ClassifierKind::Svm; }
  Checkpoint to_checkpoint() const override;
  const Eigen::VectorXd& weights() const { return w_; }
  double bias() const { return b_; }
  /// Mean regularized hinge objective per epoch.
  const std::vector<double>& objective() const { return objective_; }
  Eigen::VectorXd margins(const RowMatrix& z) const;

  /// Hinge-loss SGD on standardized rows; labels 1 = safe map to +1.
  static std::unique_ptr<LinearSvm> fit(const RowMatrix& x, const std::vector<int>& y,
                                        int n_bus, int epochs, double lr, double lambda,
                                        std::uint64_t seed, bool standardize = true);

 protected:
  Eigen::VectorXd proba_standardized(const RowMatrix& z) const override;

 private:
  friend std::unique_ptr<Classifier> classifier_from_checkpoint(const Checkpoint&);
  Eigen::VectorXd w_;
  double b_ = 0.0;
  std::vector<double> objective_;
};

/// MLP, CNN or aggregation GNN ending in a sigmoid head.
class NeuralClassifier : public Classifier {
 public:
  ClassifierKind kind() const override { return kind_; }
  Checkpoint to_checkpoint() const override;
  const Sequential& net() const { return net_; }
  Sequential& net() { return net_; }
  int aggregation_node() const { return agg_node_; }
  int n_max() const { return n_max_; }

  /// Builds the architecture for `kind` over an N-bus case; `shift` and
  /// `node` are used by the GNN only.
  static std::unique_ptr<NeuralClassifier> make(ClassifierKind kind, int n_bus,
                                                const Eigen::MatrixXd& shift = {},
                                                int node = 0, int n_max = 3);
  static std::vector<LayerSpec> architecture(ClassifierKind kind, int n_bus, int n_max = 3);

  /// Network input for raw rows (standardized, and aggregated for the GNN).
  Batch network_input(const RowMatrix& features) const;
  void set_standardizer(const Standardizer& s) { standardizer_ = s; }
  void set_input_standardizer(const Standardizer& s) { input_std_ = s; }

 protected:
  Eigen::VectorXd proba_standardized(const RowMatrix& z) const override;

 private:
  friend std::unique_ptr<Classifier> classifier_from_checkpoint(const Checkpoint&);
  Batch prepare(const RowMatrix& z) const;

  ClassifierKind kind_ = ClassifierKind::Mlp;
  Sequential net_;
  Eigen::MatrixXd shift_;
  int agg_node_ = 0;
  int n_max_ = 3;
  Standardizer input_std_;  // GNN: on the aggregated sequence
};

struct ClassifierTrainOptions {
  std::uint64_t seed = 0;
  int epochs = 300;         // neural nets
  double lr = 1e-3;
  int batch_size = 32;
  int dt_max_depth = 12;
  int dt_min_leaf = 5;
  int svm_epochs = 200;
  double svm_lr = 0.1;
  double svm_lambda = 1e-3;
  int gnn_n_max = 3;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
  double seconds = 0.0;
};

/// Trains on the dataset's train rows (val rows select the best NN epoch).
/// `net` supplies the topology for the GNN.
std::unique_ptr<Classifier> train_classifier(ClassifierKind kind, const LabeledDataset& ds,
                                             const Network& net,
                                             const ClassifierTrainOptions& opts,
                                             TrainHistory* history = nullptr);

struct Metrics {
  double accuracy = 0.0;   // percent
  double precision = 0.0;  // percent, safe = positive
  double recall = 0.0;     // percent
  double train_time = 0.0; // s
  double test_time = 0.0;  // s
  int tp = 0, tn = 0, fp = 0, fn = 0;
  bool degenerate = false; // no positive predictions, precision reported as 0
};

Metrics confusion_metrics(const std::vector<int>& predicted, const std::vector<int>& truth);
/// Metrics on the given rows; test_time is the wall time of prediction.
Metrics evaluate(const Classifier& model, const LabeledDataset& ds, const std::vector<int>& rows);

void save_classifier(const Classifier& model, const std::filesystem::path& dir);
std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& dir);
std::unique_ptr<Classifier> classifier_from_checkpoint(const Checkpoint& ckpt);

}  // namespace gridshed
