#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridshed/checkpoint.hpp"
#include "gridshed/dataset.hpp"
#include "gridshed/optim.hpp"
#include "gridshed/tensor.hpp"
#include "gridshed/ufls_env.hpp"
#include "gridshed/util.hpp"

namespace gridshed {

// ---- replay buffer --------------------------------------------------------

struct Experience {
  Eigen::VectorXd state;
  Eigen::VectorXd action;  // continuous, in (-1, 1)
  double reward = 0.0;     // raw r; r_lambda is formed at update time
  int constraint_c = 0;
  Eigen::VectorXd next_state;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity = 100000);
  void push(Experience e);
  size_t size() const { return items_.size(); }
  size_t capacity() const { return capacity_; }
  const Experience& at(size_t i) const { return items_.at(i); }
  /// Uniform draws with replacement.
  std::vector<size_t> sample_indices(size_t n, Rng& rng) const;

 private:
  size_t capacity_;
  size_t cursor_ = 0;
  std::vector<Experience> items_;
};

// ---- agent ----------------------------------------------------------------

struct SacConfig {
  int hidden = 128;
  double actor_lr = 1e-7;
  double critic_lr = 1e-6;
  double alpha = 0.1;
  double gamma = 0.99;
  double tau = 0.005;
  double lambda = 0.0;
  int batch_size = 64;
  size_t buffer_capacity = 100000;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
};
void to_json(nlohmann::json& j, const SacConfig& c);
void from_json(const nlohmann::json& j, SacConfig& c);

/// Actor, twin critics with their targets, and the state encoding the
/// agent was trained with.
struct AgentParams {
  SacConfig cfg;
  int state_dim = 0;
  int action_dim = 0;
  Sequential actor;      // state -> [mean, log_std]
  Sequential q1, q2;     // [state, action] -> Q
  Eigen::VectorXd q1_target, q2_target;
  AdamState actor_opt, q1_opt, q2_opt;
  std::vector<int> shed_buses;
  Standardizer state_std;

  static AgentParams make(int state_dim, int action_dim, const SacConfig& cfg, std::uint64_t seed);
};

struct PolicyHead {
  Batch mean;
  Batch log_std;  // clamped
  Batch raw_log_std;
};
PolicyHead policy_head(const AgentParams& agent, const Batch& states, ForwardCache* cache = nullptr);

struct ActionSample {
  std::vector<int> flags;  // a_j > 0
  Eigen::VectorXd action;
  double log_prob = 0.0;
};
/// Stochastic draw; with `rng` null the mean action is returned (eps = 0).
ActionSample sample_action(const AgentParams& agent, const Eigen::VectorXd& state, Rng* rng);

struct SacBatch {
  Batch state, action, next_state;
  Eigen::VectorXd reward, constraint, done;
  int size() const { return static_cast<int>(reward.size()); }
};
SacBatch make_batch(const ReplayBuffer& buf, const std::vector<size_t>& idx);

/// y = r + lambda c + gamma (1 - done) (min target Q(s', a') - alpha log pi(a'|s')),
/// a' drawn with the given noise rows.
Eigen::VectorXd critic_targets(const AgentParams& agent, const SacBatch& b, const Batch& eps_next);

/// Mean squared error of one critic against fixed targets; the parameter
/// gradient is accumulated into `grad` when non-null.
double critic_loss(const Sequential& q, const Batch& state, const Batch& action,
                   const Eigen::VectorXd& y, Eigen::VectorXd* grad);

/// Mean of alpha log pi(a|s) - min(Q1, Q2)(s, a) over reparameterized
/// actions; gradient with respect to the actor parameters.
double actor_loss(const AgentParams& agent, const Batch& state, const Batch& eps,
                  Eigen::VectorXd* grad);

struct UpdateStats {
  double q1_loss = 0.0, q2_loss = 0.0, actor_loss = 0.0;
};
UpdateStats critic_update(AgentParams& agent, const SacBatch& b, const Batch& eps_next);
double actor_update(AgentParams& agent, const SacBatch& b, const Batch& eps);

/// target <- tau theta + (1 - tau) target.
void target_update(const Eigen::VectorXd& theta, Eigen::VectorXd& target, double tau);

Checkpoint agent_checkpoint(const AgentParams& agent);
AgentParams agent_from_checkpoint(const Checkpoint& c);
void save_agent(const AgentParams& agent, const std::filesystem::path& dir);
AgentParams load_agent(const std::filesystem::path& dir);

// ---- training and evaluation ---------------------------------------------

using Policy = std::function<std::vector<int>(const EnvState&)>;
/// Evaluation mode: flags from the sign of the actor mean.
Policy deterministic_policy(const AgentParams& agent);

struct SafetyResult {
  double safety_pct = 0.0;
  double mean_shed = 0.0;  // total fraction shed per point
  int points = 0;
};
SafetyResult evaluate_safety(const Policy& policy, const std::vector<Network>& unsafe_set,
                             const std::vector<int>& shed_buses, const FsaBackend& fsa,
                             const EnvConfig& cfg = {});
SafetyResult evaluate_safety(const AgentParams& agent, const std::vector<Network>& unsafe_set,
                             const FsaBackend& fsa, const EnvConfig& cfg = {});

struct TaggedCase {
  Network net;
  int contingency_bus = -1;  // -1: untagged
};
struct BalanceResult {
  double fraction = 0.0;
  int evaluated = 0;
  int skipped = 0;
};
/// Share of cases whose largest cumulative shed sits at a shed bus nearest
/// (in line hops) to the binding contingency. Cases with no shedding count
/// as misses.
BalanceResult balanced_shedding_analysis(const Policy& policy, const std::vector<TaggedCase>& cases,
                                         const std::vector<int>& shed_buses, const FsaBackend& fsa,
                                         const EnvConfig& cfg = {});

struct UflsTask {
  const FsaBackend* backend = nullptr;
  std::vector<Network> train_pool;  // unsafe operating points for resets
  std::vector<Network> eval_set;    // fixed unsafe points for checkpoints
  std::vector<int> shed_buses;
  Standardizer state_std;
  EnvConfig env;
};

struct SacTrainOptions {
  int episodes = 10000;
  std::uint64_t seed = 0;
  int eval_interval = 100;
  TransitionLog* log = nullptr;
  std::function<void(int episode)> progress;
};

struct TrainReport {
  std::vector<int> checkpoint_episode;
  std::vector<double> safety_pct;
  std::vector<double> total_shed;
  std::vector<double> checkpoint_seconds;
  std::vector<double> episode_returns;  // undiscounted raw r
  std::vector<int> episode_safe;        // 1 when the episode ended safe
  int transitions = 0;
  double seconds = 0.0;

  /// episode, safety_pct, total_shed[, wallclock_s]
  std::string csv(bool with_wallclock = true) const;
};

/// Trains a fresh agent (seed streams "init", "env", "act").
AgentParams train_agent(const UflsTask& task, const SacConfig& cfg, const SacTrainOptions& opts,
                        TrainReport* report);

}  // namespace gridshed
