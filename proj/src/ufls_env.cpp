#include "gridshed/ufls_env.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "gridshed/errors.hpp"
#include "gridshed/power_flow.hpp"
#include "gridshed/scenario.hpp"

namespace gridshed {

std::vector<int> select_shed_buses(const Network& net, int count) {
  const auto p = net.bus_p_load();
  std::vector<int> candidates;
  for (int b = 0; b < net.bus_count(); ++b)
    if (p[static_cast<size_t>(b)] > 0.0) candidates.push_back(b);
  if (count < 1 || static_cast<int>(candidates.size()) < count)
    throw InvalidInput("case has " + std::to_string(candidates.size()) +
                       " load buses, cannot select " + std::to_string(count));
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    return p[static_cast<size_t>(a)] > p[static_cast<size_t>(b)];
  });
  candidates.resize(static_cast<size_t>(count));
  return candidates;
}

Eigen::RowVectorXd raw_injections(const Network& net) {
  const int n = net.bus_count();
  Eigen::RowVectorXd x(2 * n);
  for (int b = 0; b < n; ++b) {
    x(b) = net.buses[static_cast<size_t>(b)].p_net;
    x(n + b) = net.buses[static_cast<size_t>(b)].q_net;
  }
  return x;
}

RowMatrix injections_from_features(const RowMatrix& features, int n_bus) {
  if (features.cols() != 4 * n_bus) throw InvalidInput("feature width does not match bus count");
  RowMatrix x(features.rows(), 2 * n_bus);
  for (int b = 0; b < n_bus; ++b) {
    x.col(b) = features.col(4 * b + 2);
    x.col(n_bus + b) = features.col(4 * b + 3);
  }
  return x;
}

Eigen::VectorXd assemble_state(const Network& net, const Standardizer& state_std) {
  const Eigen::RowVectorXd raw = raw_injections(net);
  if (state_std.mean.size() != raw.size())
    throw InvalidInput("state standardizer width does not match 2N");
  return state_std.apply_row(raw).transpose();
}

std::vector<double> EnvState::cumulative_shed(const EnvConfig& cfg) const {
  std::vector<double> out(shed_steps.size());
  for (size_t j = 0; j < shed_steps.size(); ++j) out[j] = shed_steps[j] * cfg.step_fraction;
  return out;
}

double EnvState::total_shed(const EnvConfig& cfg) const {
  const int steps = std::accumulate(shed_steps.begin(), shed_steps.end(), 0);
  return steps * cfg.step_fraction;
}

Eigen::VectorXd EnvState::p_gen() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(net.generators.size()));
  for (size_t g = 0; g < net.generators.size(); ++g) v(static_cast<Eigen::Index>(g)) = net.generators[g].p_mech;
  return v;
}

Eigen::VectorXd EnvState::q_gen() const {
  // reactive output per machine: bus share of (q_net + q_load)
  const auto ql = net.bus_q_load();
  std::vector<int> per_bus(net.buses.size(), 0);
  for (const auto& g : net.generators) ++per_bus[static_cast<size_t>(g.bus)];
  Eigen::VectorXd v(static_cast<Eigen::Index>(net.generators.size()));
  for (size_t g = 0; g < net.generators.size(); ++g) {
    const auto b = static_cast<size_t>(net.generators[g].bus);
    v(static_cast<Eigen::Index>(g)) = (net.buses[b].q_net + ql[b]) / per_bus[b];
  }
  return v;
}

Eigen::VectorXd EnvState::p_load() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(net.loads.size()));
  for (size_t l = 0; l < net.loads.size(); ++l) v(static_cast<Eigen::Index>(l)) = net.loads[l].p_load;
  return v;
}

Eigen::VectorXd EnvState::q_load() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(net.loads.size()));
  for (size_t l = 0; l < net.loads.size(); ++l) v(static_cast<Eigen::Index>(l)) = net.loads[l].q_load;
  return v;
}

EnvState make_state(const Network& net, const std::vector<int>& shed_buses) {
  EnvState s;
  s.net = net;
  for (const auto& l : net.loads) {
    s.initial_p.push_back(l.p_load);
    s.initial_q.push_back(l.q_load);
  }
  for (int b : shed_buses)
    if (b < 0 || b >= net.bus_count()) throw InvalidInput("shed bus out of range");
  s.shed_buses = shed_buses;
  s.shed_steps.assign(shed_buses.size(), 0);
  return s;
}

EnvState reset(const std::vector<Network>& pool, const std::vector<int>& shed_buses, Rng& rng) {
  if (pool.empty()) throw InvalidInput("unsafe pool is empty");
  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  return make_state(pool[pick(rng)], shed_buses);
}

EnvState reset(const std::vector<Network>& pool, const std::vector<int>& shed_buses,
               std::uint64_t seed) {
  Rng rng(seed);
  return reset(pool, shed_buses, rng);
}

TdsBackend::TdsBackend(std::vector<Contingency> set, FsaThresholds th, SimOptions sim)
    : set_(std::move(set)), th_(th), sim_(sim) {}

FsaVerdict TdsBackend::verdict(const Network& solved) const {
  return run_fsa_tds(solved, set_, th_, sim_);
}

bool TdsBackend::safe(const Network& solved) const { return verdict(solved).safe; }

SurrogateBackend::SurrogateBackend(std::shared_ptr<const Classifier> model, double mask_fraction,
                                   std::uint64_t mask_seed, MaskMode mode)
    : model_(std::move(model)), mask_fraction_(mask_fraction), mask_seed_(mask_seed), mode_(mode) {
  if (!model_) throw InvalidInput("surrogate backend needs a classifier");
  if (mask_fraction_ < 0.0 || mask_fraction_ >= 1.0) throw InvalidInput("mask fraction must be in [0, 1)");
}

double SurrogateBackend::proba(const Network& solved) const {
  if (solved.bus_count() != model_->n_bus()) throw InvalidInput("classifier trained on another case");
  const auto f = bus_features(solved);
  RowMatrix row = Eigen::Map<const Eigen::RowVectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  if (mask_fraction_ == 0.0) return model_->predict_proba(row)(0);
  const std::string_view bytes(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(double));
  const auto seed = derive_seed(mask_seed_, "mask", fnv1a64(bytes));
  Eigen::RowVectorXd r = row.row(0);
  std::vector<std::vector<int>> masks{mask_buses(r, solved.bus_count(), mask_fraction_, seed)};
  row.row(0) = r;
  return model_->predict_proba(row, masks, mode_)(0);
}

bool SurrogateBackend::safe(const Network& solved) const { return proba(solved) >= 0.5; }

int Transition::skipped() const {
  int n = 0;
  for (size_t j = 0; j < action.size(); ++j) n += action[j] && !applied[j];
  return n;
}

Transition step(const EnvState& state, const std::vector<int>& action, const FsaBackend& fsa,
                const EnvConfig& cfg) {
  if (state.done) throw InvalidInput("episode already finished");
  if (state.step_index >= cfg.max_steps) throw InvalidInput("step budget exhausted");
  if (action.size() != state.shed_buses.size())
    throw InvalidInput("action has " + std::to_string(action.size()) + " flags, expected " +
                       std::to_string(state.shed_buses.size()));
  Transition t;
  t.state = state;
  t.action = action;
  t.applied.assign(action.size(), 0);
  t.next_state = state;
  EnvState& next = t.next_state;
  int shed = 0;
  for (size_t j = 0; j < action.size(); ++j) {
    if (!action[j] || next.shed_steps[j] >= cfg.steps_per_bus) continue;
    t.applied[j] = 1;
    ++next.shed_steps[j];
    ++shed;
    const double keep = 1.0 - next.shed_steps[j] * cfg.step_fraction;
    for (size_t l = 0; l < next.net.loads.size(); ++l) {
      auto& load = next.net.loads[l];
      if (load.bus != next.shed_buses[j]) continue;
      load.p_load = next.initial_p[l] * keep;
      load.q_load = next.initial_q[l] * keep;
    }
  }
  if (shed > 0) next.net = solved(std::move(next.net));
  ++next.step_index;
  t.reward = -shed * cfg.step_fraction;
  t.constraint_c = fsa.safe(next.net) ? 1 : 0;
  t.done = t.constraint_c == 1 || next.step_index >= cfg.max_steps;
  next.done = t.done;
  return t;
}

double combined_reward(double r, int c, double lambda) { return r + lambda * c; }

void TransitionLog::add(int episode, const Transition& t) {
  std::string bits, applied;
  for (size_t j = 0; j < t.action.size(); ++j) {
    bits += t.action[j] ? '1' : '0';
    applied += t.applied[j] ? '1' : '0';
  }
  rows_.push_back(std::to_string(episode) + "," + std::to_string(t.next_state.step_index) + "," +
                  bits + "," + applied + "," + fmt_fixed(t.reward) + "," +
                  std::to_string(t.constraint_c) + "," + (t.done ? "1" : "0"));
}

void TransitionLog::write(const std::filesystem::path& path) const {
  std::ostringstream os;
  os << "episode,step,action,applied,reward,c,done\n";
  for (const auto& r : rows_) os << r << '\n';
  write_file(path, os.str());
}

}  // namespace gridshed
