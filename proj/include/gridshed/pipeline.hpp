#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridshed/classifier.hpp"
#include "gridshed/sac.hpp"
#include "gridshed/ufls_env.hpp"

namespace gridshed {

/// A pipeline stage failed; carries the stage name and the seed involved.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::int64_t seed, const std::string& what)
      : std::runtime_error("stage " + stage + (seed >= 0 ? " (seed " + std::to_string(seed) + ")" : "") +
                           ": " + what),
        stage_(std::move(stage)), seed_(seed) {}
  const std::string& stage() const { return stage_; }
  std::int64_t seed() const { return seed_; }

 private:
  std::string stage_;
  std::int64_t seed_;
};

/// Case or contingency reference: an existing path (relative to `base_dir`
/// when not absolute) or the name of a bundled file.
std::filesystem::path resolve_case(const std::string& ref, const std::filesystem::path& base_dir = {});
std::filesystem::path resolve_contingencies(const std::string& ref,
                                            const std::filesystem::path& base_dir = {});

/// SAC settings for desk-scale episode budgets: learning rates of 1e-7 / 1e-6
/// barely move the networks within a few thousand episodes.
inline SacConfig desk_sac() {
  SacConfig c;
  c.actor_lr = 3e-4;
  c.critic_lr = 3e-4;
  return c;
}

struct ExperimentConfig {
  std::filesystem::path case_path;
  std::filesystem::path contingency_path;
  std::vector<std::uint64_t> seeds;
  int dataset_size = 2000;
  std::vector<ClassifierKind> classifiers{ClassifierKind::Dt, ClassifierKind::Svm,
                                          ClassifierKind::Mlp, ClassifierKind::Cnn,
                                          ClassifierKind::Gnn};
  std::vector<double> lambdas{0, 1, 2, 10, 20};
  int episodes = 10000;
  std::filesystem::path output_dir;

  std::vector<std::string> rl_backends{"gnn"};  // any of tds, dt, svm, mlp, cnn, gnn
  int shed_count = 7;
  int eval_points = 100;
  int eval_interval = 100;
  double mask_fraction = 0.25;
  MaskMode mask_mode = MaskMode::ZeroStandardized;
  ClassifierTrainOptions classifier;  // seed is replaced per cell
  SacConfig sac = desk_sac();         // lambda is replaced per cell
  int workers = 1;

  void validate() const;
  /// Canonical JSON (paths as given after resolution, output dir excluded).
  nlohmann::json to_json() const;
  /// Hash of the canonical JSON plus the case and contingency file bytes.
  std::string hash() const;
};

/// Reads a JSON config; relative paths resolve against the file's folder.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Unsafe operating points rebuilt from a labeled dataset.
struct RlData {
  std::vector<Network> train_pool;  // unsafe train rows
  std::vector<Network> eval_set;    // first `eval_points` unsafe val/test rows
  std::vector<TaggedCase> tagged;   // eval_set with the binding contingency's bus
  Standardizer state_std;           // 2N injections over train rows
};
RlData build_rl_data(const Network& base, const std::vector<Contingency>& set,
                     const LabeledDataset& ds, int eval_points);

/// Bus used for hop distances: the load-step bus, or a line's to_bus.
int contingency_bus(const Network& net, const Contingency& c);

/// "tds" or a classifier kind. Surrogates need `model`.
std::unique_ptr<FsaBackend> make_backend(const std::string& kind,
                                         std::shared_ptr<const Classifier> model,
                                         const std::vector<Contingency>& set,
                                         double mask_fraction = 0.0, std::uint64_t mask_seed = 0,
                                         MaskMode mode = MaskMode::ZeroStandardized);

struct BackendEntry {
  std::string backend;
  std::filesystem::path agent_dir;
  std::shared_ptr<const Classifier> model;  // null for tds
  double train_seconds = 0.0;               // from the training run
};
struct BackendRow {
  std::string backend;
  bool skipped = false;
  std::string note;
  double safety_backend = 0.0;
  double safety_tds = 0.0;
  double total_shed = 0.0;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
};
/// One row per entry; a missing checkpoint yields a skipped row with a note.
std::vector<BackendRow> compare_backends(const std::vector<BackendEntry>& entries,
                                         const std::vector<Network>& unsafe_set,
                                         const std::vector<Contingency>& set,
                                         const EnvConfig& env = {});
std::string backend_rows_csv(const std::vector<BackendRow>& rows, bool with_times);

struct ReportBundle {
  std::filesystem::path table1, table2, table3, table4, manifest;
  std::vector<std::string> stages_run;      // stages that did work this call
  std::vector<std::string> stages_skipped;  // completed earlier under the same hash
};

/// gen-data, train-fsa, train-agent, evaluate, then the report. Each stage
/// leaves a marker holding the config hash; stages whose marker matches are
/// skipped on rerun.
ReportBundle run_pipeline(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace gridshed
