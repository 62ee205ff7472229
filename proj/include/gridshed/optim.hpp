#pragma once

#include <vector>

#include <Eigen/Dense>

namespace gridshed {

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(Eigen::Index n = 0, double lr_ = 1e-3)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), lr(lr_) {}
};

/// Bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads);

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;  // d loss / d input, same length as the input
};

constexpr double kProbClamp = 1e-12;

/// Mean binary cross-entropy over probabilities clamped to [1e-12, 1 - 1e-12].
LossGrad bce_loss(const Eigen::VectorXd& p, const Eigen::VectorXd& y);

/// BCE evaluated on logits through the sigmoid; same value as bce_loss on
/// sigmoid(z) away from the clamp, with a gradient that cannot vanish.
LossGrad bce_with_logits(const Eigen::VectorXd& z, const Eigen::VectorXd& y);

constexpr double kTanhJacobianEps = 1e-6;

struct SquashedSample {
  Eigen::VectorXd action;  // tanh(u), in (-1, 1)
  Eigen::VectorXd pre;     // u = mean + eps * exp(log_std)
  double log_prob = 0.0;
};

/// a = tanh(mean + eps * exp(log_std)); log-prob of the Gaussian at u minus
/// sum log(1 - a^2 + 1e-6).
SquashedSample gaussian_tanh_sample(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                                    const Eigen::VectorXd& eps);

/// Density of the squashed Gaussian at an action in (-1, 1), one dimension.
double squashed_log_density(double action, double mean, double log_std);

}  // namespace gridshed
