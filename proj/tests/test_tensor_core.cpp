#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gridshed/checkpoint.hpp"
#include "gridshed/errors.hpp"
#include "gridshed/optim.hpp"
#include "gridshed/tensor.hpp"
#include "helpers.hpp"

using namespace gridshed;

namespace {

Batch random_batch(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n01;
  Batch b(rows, cols);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = n01(rng);
  return b;
}

Eigen::VectorXd random_vec(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n01;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = scale * n01(rng);
  return v;
}

// Worst relative error of the parameter and input gradients of
// L = sum(net(x) .* r) against central differences.
double check_net(Sequential net, const Batch& x, Rng& rng) {
  const Batch r = random_batch(static_cast<int>(x.rows()), net.output_size(), rng);
  ForwardCache cache;
  net.forward(x, &cache);
  Eigen::VectorXd g;
  const Batch gx = net.backward(cache, r, g);

  const Eigen::VectorXd p0 = net.params;
  auto by_params = [&](const Eigen::VectorXd& p) {
    net.params = p;
    const double v = net.forward(x).cwiseProduct(r).sum();
    net.params = p0;
    return v;
  };
  auto by_input = [&](const Eigen::VectorXd& flat) {
    const Batch xi = Eigen::Map<const Batch>(flat.data(), x.rows(), x.cols());
    return net.forward(xi).cwiseProduct(r).sum();
  };
  const Eigen::VectorXd x_flat = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
  const Eigen::VectorXd gx_flat = Eigen::Map<const Eigen::VectorXd>(gx.data(), gx.size());
  return std::max(gt::fd_rel_error(by_params, p0, g), gt::fd_rel_error(by_input, x_flat, gx_flat));
}

}  // namespace

TEST_SUITE("tensor_core") {

TEST_CASE("zero dense layer gives zero output") {
  Sequential net({LayerSpec::dense(3, 2)});
  net.params.setZero();
  Rng rng(1);
  CHECK(net.forward(random_batch(4, 3, rng)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("relu on [-1, 2]") {
  Sequential net({LayerSpec::relu(2)});
  Batch x(1, 2);
  x << -1, 2;
  const Batch y = net.forward(x);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 2.0);
}

TEST_CASE("conv1d kernel [1, 1] on [1, 2, 3]") {
  Sequential net({LayerSpec::conv1d(3, 1, 1, 2)});
  REQUIRE(net.param_count() == 3);
  net.params << 1, 1, 0;
  Batch x(1, 3);
  x << 1, 2, 3;
  const Batch y = net.forward(x);
  REQUIRE(y.cols() == 2);
  CHECK(y(0, 0) == 3.0);
  CHECK(y(0, 1) == 5.0);
}

TEST_CASE("functional forward matches the layer chain") {
  Rng rng(2);
  Sequential net({LayerSpec::dense(4, 3), LayerSpec::tanh(3), LayerSpec::dense(3, 2)});
  net.init(rng);
  const Batch x = random_batch(5, 4, rng);
  const Tensor t({5, 4}, std::vector<double>(x.data(), x.data() + x.size()));
  const Tensor out = forward(net.specs(), net.params, t);
  const Batch y = net.forward(x);
  CHECK(out.shape == std::vector<int>{5, 2});
  CHECK(std::equal(out.data.begin(), out.data.end(), y.data()));
}

TEST_CASE("forward is pure and bitwise repeatable") {
  Rng rng(3);
  Sequential net({LayerSpec::conv1d(6, 2, 3, 3, 1, 1), LayerSpec::relu(18), LayerSpec::maxpool1d(6, 3, 2),
                  LayerSpec::dense(9, 1), LayerSpec::sigmoid(1)});
  net.init(rng);
  const Batch x = random_batch(7, 12, rng);
  const Batch a = net.forward(x);
  const Batch b = net.forward(x);
  CHECK(a == b);
}

TEST_CASE("identity network passes the upstream gradient through") {
  Sequential net({LayerSpec::dense(3, 3)});
  net.params.setZero();
  for (int i = 0; i < 3; ++i) net.params(i * 3 + i) = 1.0;
  Rng rng(4);
  const Batch x = random_batch(2, 3, rng);
  const Batch up = random_batch(2, 3, rng);
  ForwardCache cache;
  net.forward(x, &cache);
  Eigen::VectorXd g;
  CHECK(net.backward(cache, up, g) == up);
}

TEST_CASE("scalar dense y = w x has dL/dw = x") {
  Sequential net({LayerSpec::dense(1, 1)});
  net.params << 0.7, 0.0;
  Batch x(1, 1);
  x << 1.9;
  ForwardCache cache;
  net.forward(x, &cache);
  Eigen::VectorXd g;
  const Batch up = Batch::Ones(1, 1);
  net.backward(cache, up, g);
  CHECK(g(0) == doctest::Approx(1.9));
  CHECK(g(1) == doctest::Approx(1.0));
}

TEST_CASE("finite differences: dense layers") {
  Rng rng(10);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int t = 0; t < 20; ++t) {
    const int a = dim(rng), b = dim(rng), c = dim(rng);
    Sequential net({LayerSpec::dense(a, b), LayerSpec::tanh(b), LayerSpec::dense(b, c)});
    net.init(rng);
    net.params += random_vec(net.param_count(), rng, 0.1);  // non-zero biases
    CHECK(check_net(net, random_batch(3, a, rng), rng) < 1e-4);
  }
}

TEST_CASE("finite differences: conv1d with stride and padding") {
  Rng rng(11);
  std::uniform_int_distribution<int> len(4, 9), ch(1, 3), k(1, 3), st(1, 2), pd(0, 1);
  for (int t = 0; t < 20; ++t) {
    const int l = len(rng), c = ch(rng), oc = ch(rng), kk = k(rng), s = st(rng), p = pd(rng);
    Sequential net({LayerSpec::conv1d(l, c, oc, kk, s, p)});
    net.init(rng);
    net.params += random_vec(net.param_count(), rng, 0.1);
    CHECK(check_net(net, random_batch(2, l * c, rng), rng) < 1e-4);
  }
}

TEST_CASE("finite differences: conv, pooling and activations chained") {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    const bool ceil_mode = t % 2 == 1;
    const int l = 5 + t % 3;
    const LayerSpec conv = LayerSpec::conv1d(l, 4, 3, 3, 1, 1);
    const LayerSpec pool = LayerSpec::maxpool1d(l, 3, 2, ceil_mode);
    const int flat = pool.output_size();
    Sequential net({conv, LayerSpec::relu(conv.output_size()), pool, LayerSpec::dense(flat, 2),
                    LayerSpec::sigmoid(2)});
    net.init(rng);
    net.params += random_vec(net.param_count(), rng, 0.1);
    CHECK(check_net(net, random_batch(3, l * 4, rng), rng) < 1e-4);
  }
}

TEST_CASE("BCE by hand") {
  Eigen::VectorXd p(1), y(1);
  p << 0.5;
  y << 1.0;
  CHECK(bce_loss(p, y).loss == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(p, y).loss == doctest::Approx(0.6931).epsilon(1e-4));
  Eigen::VectorXd exact(4), labels(4);
  exact << 1, 0, 1, 0;
  labels = exact;
  CHECK(bce_loss(exact, labels).loss < 1e-11);
  CHECK(bce_loss(exact, labels).loss >= 0.0);
}

TEST_CASE("BCE is non-negative") {
  Rng rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd p(5), y(5);
    for (int i = 0; i < 5; ++i) {
      p(i) = u(rng);
      y(i) = u(rng) < 0.5;
    }
    CHECK(bce_loss(p, y).loss >= 0.0);
  }
}

TEST_CASE("finite differences: BCE on probabilities and logits") {
  Rng rng(14);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd p(6), y(6);
    for (int i = 0; i < 6; ++i) {
      p(i) = u(rng);
      y(i) = u(rng) < 0.5;
    }
    const auto lg = bce_loss(p, y);
    CHECK(gt::fd_rel_error([&](const Eigen::VectorXd& q) { return bce_loss(q, y).loss; }, p, lg.grad,
                           1e-6) < 1e-6);
    const Eigen::VectorXd z = random_vec(6, rng, 2.0);
    const auto lz = bce_with_logits(z, y);
    CHECK(gt::fd_rel_error([&](const Eigen::VectorXd& q) { return bce_with_logits(q, y).loss; }, z,
                           lz.grad, 1e-6) < 1e-6);
    // logits and probabilities agree away from the clamp
    const Eigen::VectorXd s = (1.0 + (-z.array()).exp()).inverse();
    CHECK(bce_loss(s, y).loss == doctest::Approx(lz.loss).epsilon(1e-10));
  }
}

TEST_CASE("Adam") {
  SUBCASE("zero gradient leaves parameters alone") {
    AdamState s(3, 1e-3);
    Eigen::VectorXd p = Eigen::VectorXd::Constant(3, 0.4);
    adam_step(s, p, Eigen::VectorXd::Zero(3));
    CHECK(p == Eigen::VectorXd::Constant(3, 0.4));
    CHECK(s.step == 1);
  }
  SUBCASE("first step has magnitude lr") {
    AdamState s(1, 1e-3);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
    adam_step(s, p, Eigen::VectorXd::Ones(1));
    CHECK(std::abs(p(0)) == doctest::Approx(1e-3).epsilon(1e-6));
  }
  SUBCASE("constant gradient settles at lr per step") {
    AdamState s(1, 1e-3);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
    double last = 0.0;
    for (int i = 0; i < 5000; ++i) {
      const double before = p(0);
      adam_step(s, p, Eigen::VectorXd::Constant(1, 0.3));
      last = before - p(0);
    }
    CHECK(last == doctest::Approx(1e-3).epsilon(1e-4));
  }
  SUBCASE("shape mismatch") {
    AdamState s(2);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(adam_step(s, p, Eigen::VectorXd::Zero(3)), InvalidInput);
  }
}

TEST_CASE("squashed Gaussian at the mode") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(1), ls = Eigen::VectorXd::Constant(1, std::log(0.5));
  const SquashedSample s = gaussian_tanh_sample(zero, ls, zero);
  CHECK(s.action(0) == 0.0);
  const double expect = std::log(1.0 / (0.5 * std::sqrt(2 * std::numbers::pi))) - std::log(1.0 + kTanhJacobianEps);
  CHECK(s.log_prob == doctest::Approx(expect).epsilon(1e-12));

  const SquashedSample big = gaussian_tanh_sample(Eigen::VectorXd::Constant(1, 40.0), ls, zero);
  CHECK(big.action(0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("squashed density integrates to one") {
  // integrate in the pre-squash variable: da = (1 - tanh^2 u) du
  const double mean = 0.3, log_std = std::log(0.5);
  const int n = 20000;
  const double lo = -8.0, hi = 8.0, h = (hi - lo) / n;
  double total = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double u = lo + i * h;
    const double a = std::tanh(u);
    if (std::abs(a) >= 1.0) continue;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    total += w * std::exp(squashed_log_density(a, mean, log_std)) * (1.0 - a * a);
  }
  total *= h / 3.0;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("sampled log-prob equals the density at the sample") {
  Rng rng(15);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd m = random_vec(1, rng), ls = random_vec(1, rng, 0.3), e = random_vec(1, rng);
    const SquashedSample s = gaussian_tanh_sample(m, ls, e);
    if (std::abs(s.action(0)) > 0.999) continue;
    CHECK(s.log_prob == doctest::Approx(squashed_log_density(s.action(0), m(0), ls(0))).epsilon(1e-6));
  }
}

TEST_CASE("layer specs round-trip through JSON and checkpoints") {
  Rng rng(16);
  Sequential net({LayerSpec::conv1d(9, 4, 8, 3, 1, 1), LayerSpec::relu(72), LayerSpec::maxpool1d(9, 8, 2, true),
                  LayerSpec::dense(40, 1)});
  net.init(rng);
  Checkpoint c;
  c.meta["layers"] = net.specs();
  c.add("p", net.params);
  const auto dir = gt::scratch("ckpt");
  save_checkpoint(c, dir);
  const Checkpoint back = load_checkpoint(dir);
  Sequential net2(back.meta["layers"].get<std::vector<LayerSpec>>());
  net2.params = back.block("p");
  const Batch x = random_batch(3, 36, rng);
  CHECK(net.forward(x) == net2.forward(x));
  CHECK_FALSE(back.has("q"));
}

TEST_CASE("init bounds") {
  Rng rng(17);
  Sequential net({LayerSpec::dense(30, 20)});
  net.init(rng);
  const double bound = std::sqrt(6.0 / 50.0);
  CHECK(net.params.head(600).cwiseAbs().maxCoeff() <= bound);
  CHECK(net.params.tail(20).cwiseAbs().maxCoeff() == 0.0);
}

}  // TEST_SUITE
