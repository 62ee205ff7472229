#include "gridshed/sac.hpp"

#include <cmath>
#include <numbers>

#include "gridshed/errors.hpp"

namespace gridshed {

using nlohmann::json;

void to_json(json& j, const SacConfig& c) {
  j = {{"hidden", c.hidden},         {"actor_lr", c.actor_lr},
       {"critic_lr", c.critic_lr},   {"alpha", c.alpha},
       {"gamma", c.gamma},           {"tau", c.tau},
       {"lambda", c.lambda},         {"batch_size", c.batch_size},
       {"buffer_capacity", c.buffer_capacity},
       {"log_std_min", c.log_std_min}, {"log_std_max", c.log_std_max}};
}

void from_json(const json& j, SacConfig& c) {
  const SacConfig d = c;  // missing keys keep the current values
  c.hidden = j.value("hidden", d.hidden);
  c.actor_lr = j.value("actor_lr", d.actor_lr);
  c.critic_lr = j.value("critic_lr", d.critic_lr);
  c.alpha = j.value("alpha", d.alpha);
  c.gamma = j.value("gamma", d.gamma);
  c.tau = j.value("tau", d.tau);
  c.lambda = j.value("lambda", d.lambda);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
  c.log_std_min = j.value("log_std_min", d.log_std_min);
  c.log_std_max = j.value("log_std_max", d.log_std_max);
}

namespace {

std::vector<LayerSpec> mlp(int in, int hidden, int out) {
  return {LayerSpec::dense(in, hidden), LayerSpec::relu(hidden), LayerSpec::dense(hidden, hidden),
          LayerSpec::relu(hidden), LayerSpec::dense(hidden, out)};
}

Batch concat(const Batch& a, const Batch& b) {
  Batch x(a.rows(), a.cols() + b.cols());
  x << a, b;
  return x;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw TrainingDiverged(std::string(what) + " is not finite", -1);
}

struct Reparam {
  Batch action, eps, sigma;
  Eigen::VectorXd log_prob;
};

Reparam reparameterize(const PolicyHead& h, const Batch& eps) {
  if (eps.rows() != h.mean.rows() || eps.cols() != h.mean.cols())
    throw InvalidInput("noise shape does not match the policy output");
  Reparam r;
  r.eps = eps;
  r.sigma = h.log_std.array().exp().matrix();
  r.action.resize(h.mean.rows(), h.mean.cols());
  r.log_prob.resize(h.mean.rows());
  for (Eigen::Index i = 0; i < h.mean.rows(); ++i) {
    const auto s = gaussian_tanh_sample(h.mean.row(i).transpose(), h.log_std.row(i).transpose(),
                                        eps.row(i).transpose());
    r.action.row(i) = s.action.transpose();
    r.log_prob(i) = s.log_prob;
  }
  return r;
}

}  // namespace

AgentParams AgentParams::make(int state_dim, int action_dim, const SacConfig& cfg,
                              std::uint64_t seed) {
  if (state_dim < 1 || action_dim < 1 || cfg.hidden < 1) throw InvalidInput("agent dimensions must be positive");
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) throw InvalidInput("tau must be in (0, 1]");
  if (cfg.lambda < 0.0) throw InvalidInput("lambda must be non-negative");
  AgentParams a;
  a.cfg = cfg;
  a.state_dim = state_dim;
  a.action_dim = action_dim;
  a.actor = Sequential(mlp(state_dim, cfg.hidden, 2 * action_dim));
  a.q1 = Sequential(mlp(state_dim + action_dim, cfg.hidden, 1));
  a.q2 = Sequential(mlp(state_dim + action_dim, cfg.hidden, 1));
  Rng rng(seed);
  a.actor.init(rng);
  a.q1.init(rng);
  a.q2.init(rng);
  a.q1_target = a.q1.params;
  a.q2_target = a.q2.params;
  a.actor_opt = AdamState(a.actor.param_count(), cfg.actor_lr);
  a.q1_opt = AdamState(a.q1.param_count(), cfg.critic_lr);
  a.q2_opt = AdamState(a.q2.param_count(), cfg.critic_lr);
  return a;
}

PolicyHead policy_head(const AgentParams& agent, const Batch& states, ForwardCache* cache) {
  const Batch out = agent.actor.forward(states, cache);
  const int n = agent.action_dim;
  PolicyHead h;
  h.mean = out.leftCols(n);
  h.raw_log_std = out.rightCols(n);
  h.log_std = h.raw_log_std.cwiseMax(agent.cfg.log_std_min).cwiseMin(agent.cfg.log_std_max);
  return h;
}

ActionSample sample_action(const AgentParams& agent, const Eigen::VectorXd& state, Rng* rng) {
  if (state.size() != agent.state_dim) throw InvalidInput("state width does not match the agent");
  const PolicyHead h = policy_head(agent, state.transpose());
  Eigen::VectorXd eps = Eigen::VectorXd::Zero(agent.action_dim);
  if (rng) {
    std::normal_distribution<double> n01;
    for (auto& e : eps) e = n01(*rng);
  }
  const auto s = gaussian_tanh_sample(h.mean.row(0).transpose(), h.log_std.row(0).transpose(), eps);
  ActionSample out{std::vector<int>(static_cast<size_t>(agent.action_dim)), s.action, s.log_prob};
  for (int j = 0; j < agent.action_dim; ++j) out.flags[static_cast<size_t>(j)] = s.action(j) > 0.0;
  return out;
}

SacBatch make_batch(const ReplayBuffer& buf, const std::vector<size_t>& idx) {
  if (idx.empty()) throw InvalidInput("empty batch");
  const auto& first = buf.at(idx[0]);
  const auto b = static_cast<Eigen::Index>(idx.size());
  SacBatch out;
  out.state.resize(b, first.state.size());
  out.next_state.resize(b, first.state.size());
  out.action.resize(b, first.action.size());
  out.reward.resize(b);
  out.constraint.resize(b);
  out.done.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& e = buf.at(idx[static_cast<size_t>(i)]);
    out.state.row(i) = e.state.transpose();
    out.next_state.row(i) = e.next_state.transpose();
    out.action.row(i) = e.action.transpose();
    out.reward(i) = e.reward;
    out.constraint(i) = e.constraint_c;
    out.done(i) = e.done ? 1.0 : 0.0;
  }
  return out;
}

Eigen::VectorXd critic_targets(const AgentParams& agent, const SacBatch& b, const Batch& eps_next) {
  const auto& c = agent.cfg;
  const Eigen::VectorXd r_lambda = b.reward + c.lambda * b.constraint;
  if (c.gamma == 0.0) return r_lambda;
  const Reparam next = reparameterize(policy_head(agent, b.next_state), eps_next);
  const Batch sa = concat(b.next_state, next.action);
  Sequential q1 = agent.q1, q2 = agent.q2;
  q1.params = agent.q1_target;
  q2.params = agent.q2_target;
  const Batch t1 = q1.forward(sa), t2 = q2.forward(sa);
  Eigen::VectorXd y(b.size());
  for (int i = 0; i < b.size(); ++i) {
    if (b.done(i) > 0.5) {
      y(i) = r_lambda(i);
      continue;
    }
    const double soft = std::min(t1(i, 0), t2(i, 0)) - c.alpha * next.log_prob(i);
    y(i) = r_lambda(i) + c.gamma * soft;
  }
  return y;
}

double critic_loss(const Sequential& q, const Batch& state, const Batch& action,
                   const Eigen::VectorXd& y, Eigen::VectorXd* grad) {
  ForwardCache cache;
  const Batch out = q.forward(concat(state, action), grad ? &cache : nullptr);
  const Eigen::VectorXd diff = out.col(0) - y;
  const double n = static_cast<double>(y.size());
  const double loss = diff.squaredNorm() / n;
  if (grad) {
    const Batch g = 2.0 * diff / n;
    q.backward(cache, g, *grad);
  }
  return loss;
}

double actor_loss(const AgentParams& agent, const Batch& state, const Batch& eps,
                  Eigen::VectorXd* grad) {
  const auto& c = agent.cfg;
  const int n = agent.action_dim;
  const double bsz = static_cast<double>(state.rows());
  ForwardCache cache;
  const PolicyHead h = policy_head(agent, state, grad ? &cache : nullptr);
  const Reparam r = reparameterize(h, eps);
  const Batch sa = concat(state, r.action);
  ForwardCache c1, c2;
  const Batch v1 = agent.q1.forward(sa, grad ? &c1 : nullptr);
  const Batch v2 = agent.q2.forward(sa, grad ? &c2 : nullptr);
  double loss = 0.0;
  Eigen::VectorXi pick(state.rows());
  for (Eigen::Index i = 0; i < state.rows(); ++i) {
    pick(i) = v1(i, 0) <= v2(i, 0) ? 1 : 2;
    loss += c.alpha * r.log_prob(i) - std::min(v1(i, 0), v2(i, 0));
  }
  loss /= bsz;
  if (!grad) return loss;

  // dQ_min / da through whichever critic is smaller per row
  Batch up1 = Batch::Zero(state.rows(), 1), up2 = Batch::Zero(state.rows(), 1);
  for (Eigen::Index i = 0; i < state.rows(); ++i) (pick(i) == 1 ? up1 : up2)(i, 0) = 1.0;
  Eigen::VectorXd scratch;
  const Batch dq = agent.q1.backward(c1, up1, scratch).rightCols(n) +
                   agent.q2.backward(c2, up2, scratch).rightCols(n);

  Batch g_out(state.rows(), 2 * n);
  for (Eigen::Index i = 0; i < state.rows(); ++i) {
    for (int j = 0; j < n; ++j) {
      const double a = r.action(i, j);
      const double one_m = 1.0 - a * a;
      const double dlogp_du = 2.0 * a * one_m / (one_m + kTanhJacobianEps);
      const double g_u = (c.alpha * dlogp_du - dq(i, j) * one_m) / bsz;
      g_out(i, j) = g_u;
      const double raw = h.raw_log_std(i, j);
      const bool inside = raw > c.log_std_min && raw < c.log_std_max;
      g_out(i, n + j) = inside ? g_u * r.eps(i, j) * r.sigma(i, j) - c.alpha / bsz : 0.0;
    }
  }
  agent.actor.backward(cache, g_out, *grad);
  return loss;
}

UpdateStats critic_update(AgentParams& agent, const SacBatch& b, const Batch& eps_next) {
  const Eigen::VectorXd y = critic_targets(agent, b, eps_next);
  UpdateStats s;
  Eigen::VectorXd g1 = Eigen::VectorXd::Zero(agent.q1.param_count());
  Eigen::VectorXd g2 = Eigen::VectorXd::Zero(agent.q2.param_count());
  s.q1_loss = critic_loss(agent.q1, b.state, b.action, y, &g1);
  s.q2_loss = critic_loss(agent.q2, b.state, b.action, y, &g2);
  check_finite(s.q1_loss, "critic 1 loss");
  check_finite(s.q2_loss, "critic 2 loss");
  adam_step(agent.q1_opt, agent.q1.params, g1);
  adam_step(agent.q2_opt, agent.q2.params, g2);
  return s;
}

double actor_update(AgentParams& agent, const SacBatch& b, const Batch& eps) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(agent.actor.param_count());
  const double loss = actor_loss(agent, b.state, eps, &g);
  check_finite(loss, "actor loss");
  adam_step(agent.actor_opt, agent.actor.params, g);
  return loss;
}

void target_update(const Eigen::VectorXd& theta, Eigen::VectorXd& target, double tau) {
  if (theta.size() != target.size()) throw InvalidInput("target shape does not match the critic");
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidInput("tau must be in [0, 1]");
  target = tau * theta + (1.0 - tau) * target;
}

Checkpoint agent_checkpoint(const AgentParams& a) {
  Checkpoint c;
  c.meta["format"] = "gridshed-agent-1";
  c.meta["config"] = a.cfg;
  c.meta["state_dim"] = a.state_dim;
  c.meta["action_dim"] = a.action_dim;
  c.meta["shed_buses"] = a.shed_buses;
  c.meta["actor_layers"] = a.actor.specs();
  c.meta["critic_layers"] = a.q1.specs();
  c.add("actor", a.actor.params);
  c.add("q1", a.q1.params);
  c.add("q2", a.q2.params);
  c.add("q1_target", a.q1_target);
  c.add("q2_target", a.q2_target);
  c.add("state.mean", a.state_std.mean.transpose());
  c.add("state.scale", a.state_std.scale.transpose());
  return c;
}

AgentParams agent_from_checkpoint(const Checkpoint& c) {
  if (c.meta.value("format", std::string()) != "gridshed-agent-1")
    throw InvalidInput("checkpoint is not an agent");
  AgentParams a;
  a.cfg = c.meta.at("config").get<SacConfig>();
  a.state_dim = c.meta.at("state_dim").get<int>();
  a.action_dim = c.meta.at("action_dim").get<int>();
  a.shed_buses = c.meta.at("shed_buses").get<std::vector<int>>();
  a.actor = Sequential(c.meta.at("actor_layers").get<std::vector<LayerSpec>>());
  a.q1 = Sequential(c.meta.at("critic_layers").get<std::vector<LayerSpec>>());
  a.q2 = a.q1;
  auto fill = [&](Eigen::VectorXd& dst, const std::string& name, Eigen::Index n) {
    const auto& v = c.block(name);
    if (v.size() != n) throw InvalidInput("block '" + name + "' has the wrong size");
    dst = v;
  };
  fill(a.actor.params, "actor", a.actor.param_count());
  fill(a.q1.params, "q1", a.q1.param_count());
  fill(a.q2.params, "q2", a.q2.param_count());
  fill(a.q1_target, "q1_target", a.q1.param_count());
  fill(a.q2_target, "q2_target", a.q2.param_count());
  a.state_std.mean = c.block("state.mean").transpose();
  a.state_std.scale = c.block("state.scale").transpose();
  a.actor_opt = AdamState(a.actor.param_count(), a.cfg.actor_lr);
  a.q1_opt = AdamState(a.q1.param_count(), a.cfg.critic_lr);
  a.q2_opt = AdamState(a.q2.param_count(), a.cfg.critic_lr);
  return a;
}

void save_agent(const AgentParams& agent, const std::filesystem::path& dir) {
  save_checkpoint(agent_checkpoint(agent), dir);
}

AgentParams load_agent(const std::filesystem::path& dir) {
  return agent_from_checkpoint(load_checkpoint(dir));
}

}  // namespace gridshed
