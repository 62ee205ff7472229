#include "gridshed/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gridshed/errors.hpp"

namespace gridshed {

void adam_step(AdamState& s, Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  if (params.size() != grads.size() || s.m.size() != params.size())
    throw InvalidInput("adam_step: shape mismatch");
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

LossGrad bce_loss(const Eigen::VectorXd& p, const Eigen::VectorXd& y) {
  if (p.size() != y.size() || p.size() == 0) throw InvalidInput("bce_loss: shape mismatch");
  const double m = static_cast<double>(p.size());
  LossGrad out{0.0, Eigen::VectorXd(p.size())};
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p(i), kProbClamp, 1.0 - kProbClamp);
    out.loss -= y(i) * std::log(q) + (1.0 - y(i)) * std::log(1.0 - q);
    out.grad(i) = (-y(i) / q + (1.0 - y(i)) / (1.0 - q)) / m;
  }
  out.loss /= m;
  return out;
}

LossGrad bce_with_logits(const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
  if (z.size() != y.size() || z.size() == 0) throw InvalidInput("bce_with_logits: shape mismatch");
  const double m = static_cast<double>(z.size());
  LossGrad out{0.0, Eigen::VectorXd(z.size())};
  const double cap = -std::log(kProbClamp);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    // log(1 + e^z) computed stably; per-term loss capped like the clamped form
    const double softplus = std::max(z(i), 0.0) + std::log1p(std::exp(-std::abs(z(i))));
    out.loss += std::min(softplus - y(i) * z(i), cap);
    const double p = z(i) >= 0 ? 1.0 / (1.0 + std::exp(-z(i))) : std::exp(z(i)) / (1.0 + std::exp(z(i)));
    out.grad(i) = (p - y(i)) / m;
  }
  out.loss /= m;
  return out;
}

SquashedSample gaussian_tanh_sample(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                                    const Eigen::VectorXd& eps) {
  if (mean.size() != log_std.size() || mean.size() != eps.size())
    throw InvalidInput("gaussian_tanh_sample: shape mismatch");
  if (!log_std.allFinite()) throw InvalidInput("gaussian_tanh_sample: non-finite log_std");
  SquashedSample s;
  s.pre = mean.array() + eps.array() * log_std.array().exp();
  s.action = s.pre.array().tanh();
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    s.log_prob += -0.5 * eps(i) * eps(i) - log_std(i) - half_log_2pi;
    s.log_prob -= std::log(1.0 - s.action(i) * s.action(i) + kTanhJacobianEps);
  }
  return s;
}

double squashed_log_density(double a, double mean, double log_std) {
  const double u = std::atanh(a);
  const double sigma = std::exp(log_std);
  const double z = (u - mean) / sigma;
  return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * std::numbers::pi) -
         std::log(1.0 - a * a + kTanhJacobianEps);
}

}  // namespace gridshed
