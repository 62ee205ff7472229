#include <algorithm>
#include <memory>
#include <sstream>

#include "gridshed/errors.hpp"
#include "gridshed/sac.hpp"

namespace gridshed {

Policy deterministic_policy(const AgentParams& agent) {
  auto snap = std::make_shared<const AgentParams>(agent);
  return [snap](const EnvState& s) {
    return sample_action(*snap, assemble_state(s.net, snap->state_std), nullptr).flags;
  };
}

SafetyResult evaluate_safety(const Policy& policy, const std::vector<Network>& unsafe_set,
                             const std::vector<int>& shed_buses, const FsaBackend& fsa,
                             const EnvConfig& cfg) {
  if (unsafe_set.empty()) throw InvalidInput("evaluation set is empty");
  SafetyResult r;
  int safe = 0;
  double shed = 0.0;
  for (const auto& net : unsafe_set) {
    EnvState s = make_state(net, shed_buses);
    int c = 0;
    while (!s.done) {
      Transition t = step(s, policy(s), fsa, cfg);
      c = t.constraint_c;
      s = std::move(t.next_state);
    }
    safe += c;
    shed += s.total_shed(cfg);
  }
  r.points = static_cast<int>(unsafe_set.size());
  r.safety_pct = 100.0 * safe / r.points;
  r.mean_shed = shed / r.points;
  return r;
}

SafetyResult evaluate_safety(const AgentParams& agent, const std::vector<Network>& unsafe_set,
                             const FsaBackend& fsa, const EnvConfig& cfg) {
  return evaluate_safety(deterministic_policy(agent), unsafe_set, agent.shed_buses, fsa, cfg);
}

BalanceResult balanced_shedding_analysis(const Policy& policy, const std::vector<TaggedCase>& cases,
                                         const std::vector<int>& shed_buses, const FsaBackend& fsa,
                                         const EnvConfig& cfg) {
  BalanceResult out;
  int hits = 0;
  for (const auto& tc : cases) {
    if (tc.contingency_bus < 0 || tc.contingency_bus >= tc.net.bus_count()) {
      ++out.skipped;
      continue;
    }
    const auto hops = hop_distances(tc.net, tc.contingency_bus);
    int nearest = -1;
    for (int b : shed_buses) {
      const int h = hops[static_cast<size_t>(b)];
      if (h >= 0 && (nearest < 0 || h < nearest)) nearest = h;
    }
    if (nearest < 0) {
      ++out.skipped;
      continue;
    }
    EnvState s = make_state(tc.net, shed_buses);
    while (!s.done) s = step(s, policy(s), fsa, cfg).next_state;
    const int top = *std::max_element(s.shed_steps.begin(), s.shed_steps.end());
    bool hit = false;
    for (size_t j = 0; j < shed_buses.size() && top > 0; ++j)
      hit |= s.shed_steps[j] == top && hops[static_cast<size_t>(shed_buses[j])] == nearest;
    hits += hit;
    ++out.evaluated;
  }
  out.fraction = out.evaluated ? static_cast<double>(hits) / out.evaluated : 0.0;
  return out;
}

std::string TrainReport::csv(bool with_wallclock) const {
  std::ostringstream os;
  os << "episode,safety_pct,total_shed" << (with_wallclock ? ",wallclock_s" : "") << '\n';
  for (size_t i = 0; i < checkpoint_episode.size(); ++i) {
    os << checkpoint_episode[i] << ',' << fmt_fixed(safety_pct[i], 2) << ','
       << fmt_fixed(total_shed[i], 4);
    if (with_wallclock) os << ',' << fmt_fixed(checkpoint_seconds[i], 3);
    os << '\n';
  }
  return os.str();
}

AgentParams train_agent(const UflsTask& task, const SacConfig& cfg, const SacTrainOptions& opts,
                        TrainReport* report) {
  if (!task.backend) throw InvalidInput("training needs an FSA backend");
  if (task.train_pool.empty()) throw InvalidInput("unsafe pool is empty");
  if (opts.episodes < 0 || opts.eval_interval < 1) throw InvalidInput("bad episode settings");
  const int n_state = 2 * task.train_pool.front().bus_count();
  const int n_act = static_cast<int>(task.shed_buses.size());
  AgentParams agent = AgentParams::make(n_state, n_act, cfg, derive_seed(opts.seed, "init"));
  agent.shed_buses = task.shed_buses;
  agent.state_std = task.state_std;

  ReplayBuffer buf(cfg.buffer_capacity);
  Rng env_rng(derive_seed(opts.seed, "env"));
  Rng act_rng(derive_seed(opts.seed, "act"));
  std::normal_distribution<double> n01;
  auto noise = [&](int rows) {
    Batch e(rows, n_act);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = n01(act_rng);
    return e;
  };
  TrainReport rep;
  Stopwatch clock;

  for (int ep = 1; ep <= opts.episodes; ++ep) {
    EnvState s = reset(task.train_pool, task.shed_buses, env_rng);
    Eigen::VectorXd obs = assemble_state(s.net, task.state_std);
    double ret = 0.0;
    int safe = 0;
    while (!s.done) {
      const ActionSample a = sample_action(agent, obs, &act_rng);
      Transition t = step(s, a.flags, *task.backend, task.env);
      Eigen::VectorXd next_obs = assemble_state(t.next_state.net, task.state_std);
      buf.push({obs, a.action, t.reward, t.constraint_c, next_obs, t.done});
      if (opts.log) opts.log->add(ep, t);
      ret += t.reward;
      safe = t.constraint_c;
      ++rep.transitions;
      if (buf.size() >= static_cast<size_t>(cfg.batch_size)) {
        const SacBatch b = make_batch(buf, buf.sample_indices(static_cast<size_t>(cfg.batch_size), act_rng));
        critic_update(agent, b, noise(b.size()));
        actor_update(agent, b, noise(b.size()));
        target_update(agent.q1.params, agent.q1_target, cfg.tau);
        target_update(agent.q2.params, agent.q2_target, cfg.tau);
      }
      s = std::move(t.next_state);
      obs = std::move(next_obs);
    }
    rep.episode_returns.push_back(ret);
    rep.episode_safe.push_back(safe);
    if (ep % opts.eval_interval == 0 && !task.eval_set.empty()) {
      const SafetyResult r = evaluate_safety(agent, task.eval_set, *task.backend, task.env);
      rep.checkpoint_episode.push_back(ep);
      rep.safety_pct.push_back(r.safety_pct);
      rep.total_shed.push_back(r.mean_shed);
      rep.checkpoint_seconds.push_back(clock.seconds());
    }
    if (opts.progress) opts.progress(ep);
  }
  rep.seconds = clock.seconds();
  if (report) *report = std::move(rep);
  return agent;
}

}  // namespace gridshed
