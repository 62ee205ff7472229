#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridshed/contingency.hpp"
#include "gridshed/fsa.hpp"
#include "gridshed/network.hpp"
#include "gridshed/scenario.hpp"

namespace gridshed {

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Operating points with their ground-truth labels. Row r of `features`
/// holds 4N values, bus-major (v, delta, p, q).
struct LabeledDataset {
  int n_bus = 0;
  RowMatrix features;
  std::vector<int> labels;            // 1 = safe
  std::vector<Split> split;           // empty until split_dataset
  std::vector<int> binding;           // contingency id with the least margin, -1 if none
  RowMatrix gen_scale;                // per row, to rebuild the operating point
  RowMatrix load_scale;
  std::uint64_t seed = 0;

  int rows() const { return static_cast<int>(labels.size()); }
  std::vector<int> rows_in(Split s) const;
  /// Subset as a new dataset (split tags carried over).
  LabeledDataset subset(const std::vector<int>& rows) const;
  void validate() const;
};

struct GenerateOptions {
  ScaleRanges ranges;
  FsaThresholds thresholds;
  SimOptions sim;
  std::function<void(int done, int total)> progress;
};

/// Samples M operating points (row r uses seed stream "data"/r) and labels
/// each with run_fsa_tds.
LabeledDataset generate_dataset(const Network& base, const std::vector<Contingency>& set,
                                int m, std::uint64_t seed, const GenerateOptions& opts = {});

/// Random permutation, then contiguous blocks: train | val | test. Val and
/// test sizes are floored; train takes the remainder.
void split_dataset(LabeledDataset& ds, std::uint64_t seed, double val_fraction = 0.15,
                   double test_fraction = 0.10);

/// Picks floor(fraction * n_bus) distinct buses and zeroes all four of
/// their features in `row`. Returns the masked bus ids, ascending.
std::vector<int> mask_buses(Eigen::Ref<Eigen::RowVectorXd> row, int n_bus, double fraction,
                            std::uint64_t seed);
/// Masks every row independently (row r uses seed stream "mask"/r).
RowMatrix mask_dataset(const RowMatrix& features, int n_bus, double fraction,
                       std::uint64_t seed);

/// Per-column z-score fitted on a subset of rows; zero-variance columns keep
/// unit scale.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const RowMatrix& x, const std::vector<int>& rows);
  RowMatrix apply(const RowMatrix& x) const;
  Eigen::RowVectorXd apply_row(const Eigen::RowVectorXd& x) const;
};
void to_json(nlohmann::json& j, const Standardizer& s);
void from_json(const nlohmann::json& j, Standardizer& s);

/// features.csv, labels.csv, scales.csv and manifest.json under `dir`.
/// Values are written with round-trip precision.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir,
                  const nlohmann::json& manifest_extra = {});
LabeledDataset load_dataset(const std::filesystem::path& dir);

}  // namespace gridshed
