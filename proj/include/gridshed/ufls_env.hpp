#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridshed/classifier.hpp"
#include "gridshed/contingency.hpp"
#include "gridshed/dataset.hpp"
#include "gridshed/fsa.hpp"
#include "gridshed/network.hpp"
#include "gridshed/swing.hpp"
#include "gridshed/util.hpp"

namespace gridshed {

struct EnvConfig {
  int max_steps = 4;
  double step_fraction = 0.05;  // of the bus's initial episode load
  int steps_per_bus = 4;        // cap = steps_per_bus * step_fraction = 20%
};

/// The `count` buses with the largest active load, largest first; ties go
/// to the lowest id.
std::vector<int> select_shed_buses(const Network& net, int count = 7);

/// [p_net of every bus, q_net of every bus], length 2N, unstandardized.
Eigen::RowVectorXd raw_injections(const Network& solved);
/// The same columns taken from dataset feature rows (4N, bus-major).
RowMatrix injections_from_features(const RowMatrix& features, int n_bus);
/// Standardized 2N state vector.
Eigen::VectorXd assemble_state(const Network& solved, const Standardizer& state_std);

struct EnvState {
  Network net;                    // current solved operating point
  std::vector<double> initial_p;  // per load record, at reset
  std::vector<double> initial_q;
  std::vector<int> shed_buses;
  std::vector<int> shed_steps;    // per shed bus, 0 .. steps_per_bus
  int step_index = 0;
  bool done = false;

  std::vector<double> cumulative_shed(const EnvConfig& cfg = {}) const;
  double total_shed(const EnvConfig& cfg = {}) const;
  Eigen::VectorXd p_gen() const;
  Eigen::VectorXd q_gen() const;
  Eigen::VectorXd p_load() const;
  Eigen::VectorXd q_load() const;
};

/// Episode start at a solved operating point.
EnvState make_state(const Network& solved, const std::vector<int>& shed_buses);

/// Uniform draw from the pool. Throws InvalidInput on an empty pool.
EnvState reset(const std::vector<Network>& pool, const std::vector<int>& shed_buses, Rng& rng);
EnvState reset(const std::vector<Network>& pool, const std::vector<int>& shed_buses,
               std::uint64_t seed);

class FsaBackend {
 public:
  virtual ~FsaBackend() = default;
  virtual std::string name() const = 0;
  /// Must be safe for concurrent calls.
  virtual bool safe(const Network& solved) const = 0;
};

class TdsBackend : public FsaBackend {
 public:
  TdsBackend(std::vector<Contingency> set, FsaThresholds th = {}, SimOptions sim = {});
  std::string name() const override { return "tds"; }
  bool safe(const Network& solved) const override;
  FsaVerdict verdict(const Network& solved) const;

 private:
  std::vector<Contingency> set_;
  FsaThresholds th_;
  SimOptions sim_;
};

/// Classifier verdict P(safe) >= 0.5. With mask_fraction > 0 each query
/// hides floor(fraction * N) buses chosen from a seed hashed with the input,
/// so a given state is always masked the same way.
class SurrogateBackend : public FsaBackend {
 public:
  explicit SurrogateBackend(std::shared_ptr<const Classifier> model, double mask_fraction = 0.0,
                            std::uint64_t mask_seed = 0,
                            MaskMode mode = MaskMode::ZeroStandardized);
  std::string name() const override { return to_string(model_->kind()); }
  bool safe(const Network& solved) const override;
  double proba(const Network& solved) const;

 private:
  std::shared_ptr<const Classifier> model_;
  double mask_fraction_;
  std::uint64_t mask_seed_;
  MaskMode mode_;
};

/// Wraps any predicate; used for degenerate and perfect backends in tests.
class OracleBackend : public FsaBackend {
 public:
  OracleBackend(std::string name, std::function<bool(const Network&)> fn)
      : name_(std::move(name)), fn_(std::move(fn)) {}
  std::string name() const override { return name_; }
  bool safe(const Network& solved) const override { return fn_(solved); }

 private:
  std::string name_;
  std::function<bool(const Network&)> fn_;
};

struct Transition {
  EnvState state;
  std::vector<int> action;   // requested flags
  std::vector<int> applied;  // flags that shed load (capped buses drop out)
  double reward = 0.0;
  int constraint_c = 0;
  EnvState next_state;
  bool done = false;

  int skipped() const;
};

/// Sheds step_fraction of the initial load at every flagged bus with
/// headroom (constant power factor), re-solves the power flow and asks the
/// backend for a verdict. reward = -(fraction shed this step).
Transition step(const EnvState& state, const std::vector<int>& action, const FsaBackend& fsa,
                const EnvConfig& cfg = {});

/// r + lambda * c.
double combined_reward(double r, int c, double lambda);

/// Audit log: episode, step, action bits, applied bits, reward, c, done.
class TransitionLog {
 public:
  void add(int episode, const Transition& t);
  void write(const std::filesystem::path& path) const;
  size_t size() const { return rows_.size(); }

 private:
  std::vector<std::string> rows_;
};

}  // namespace gridshed
