#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gridshed/errors.hpp"
#include "gridshed/tensor.hpp"

namespace gridshed {

namespace {

using ConstMat = Eigen::Map<const Batch>;
using Mat = Eigen::Map<Batch>;

// cols: (B * Lout) x (K * C); rows of out-of-range taps stay zero.
Batch im2col(const Batch& x, const LayerSpec& s) {
  const int lout = s.out_length();
  const auto b = x.rows();
  Batch cols = Batch::Zero(b * lout, s.kernel * s.channels);
  for (Eigen::Index n = 0; n < b; ++n) {
    for (int o = 0; o < lout; ++o) {
      for (int k = 0; k < s.kernel; ++k) {
        const int pos = o * s.stride - s.pad + k;
        if (pos < 0 || pos >= s.length) continue;
        cols.block(n * lout + o, k * s.channels, 1, s.channels) =
            x.block(n, pos * s.channels, 1, s.channels);
      }
    }
  }
  return cols;
}

void col2im(const Batch& dcols, const LayerSpec& s, Batch& dx) {
  const int lout = s.out_length();
  for (Eigen::Index n = 0; n < dx.rows(); ++n) {
    for (int o = 0; o < lout; ++o) {
      for (int k = 0; k < s.kernel; ++k) {
        const int pos = o * s.stride - s.pad + k;
        if (pos < 0 || pos >= s.length) continue;
        dx.block(n, pos * s.channels, 1, s.channels) +=
            dcols.block(n * lout + o, k * s.channels, 1, s.channels);
      }
    }
  }
}

}  // namespace

Sequential::Sequential(std::vector<LayerSpec> specs) : specs_(std::move(specs)) {
  if (specs_.empty()) throw InvalidInput("network needs at least one layer");
  int offset = 0;
  for (size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    if (s.input_size() <= 0 || s.output_size() <= 0)
      throw InvalidInput("layer " + std::to_string(i) + " has an empty shape");
    if (s.kind == LayerKind::Conv1d && (s.kernel < 1 || s.stride < 1 || s.pad < 0))
      throw InvalidInput("conv1d needs kernel >= 1, stride >= 1, pad >= 0");
    if (s.kind == LayerKind::MaxPool1d && s.pool < 1) throw InvalidInput("maxpool1d needs pool >= 1");
    if (i > 0 && specs_[i - 1].output_size() != s.input_size())
      throw InvalidInput("layer " + std::to_string(i) + " input " +
                         std::to_string(s.input_size()) + " does not match previous output " +
                         std::to_string(specs_[i - 1].output_size()));
    offsets_.push_back(offset);
    offset += s.param_count();
  }
  params = Eigen::VectorXd::Zero(offset);
}

int Sequential::input_size() const { return specs_.front().input_size(); }
int Sequential::output_size() const { return specs_.back().output_size(); }

void Sequential::init(Rng& rng) {
  for (size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    int fan_in = 0, fan_out = 0, weights = 0;
    if (s.kind == LayerKind::Dense) {
      fan_in = s.in;
      fan_out = s.out;
      weights = s.in * s.out;
    } else if (s.kind == LayerKind::Conv1d) {
      fan_in = s.kernel * s.channels;
      fan_out = s.kernel * s.out_channels;
      weights = s.out_channels * s.kernel * s.channels;
    } else {
      continue;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (int w = 0; w < weights; ++w) params(offsets_[i] + w) = u(rng);
    params.segment(offsets_[i] + weights, s.param_count() - weights).setZero();
  }
}

Batch Sequential::forward(const Batch& x_in, ForwardCache* cache) const {
  if (x_in.cols() != input_size())
    throw InvalidInput("input width " + std::to_string(x_in.cols()) + " does not match " +
                       std::to_string(input_size()));
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
    cache->argmax.assign(specs_.size(), {});
  }
  Batch x = x_in;
  for (size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    const double* p = params.data() + offsets_[i];
    Batch y;
    switch (s.kind) {
      case LayerKind::Dense: {
        ConstMat w(p, s.out, s.in);
        Eigen::Map<const Eigen::RowVectorXd> b(p + s.out * s.in, s.out);
        y = x * w.transpose();
        y.rowwise() += b;
        break;
      }
      case LayerKind::Conv1d: {
        const int kc = s.kernel * s.channels;
        ConstMat w(p, s.out_channels, kc);
        Eigen::Map<const Eigen::RowVectorXd> b(p + s.out_channels * kc, s.out_channels);
        Batch out = im2col(x, s) * w.transpose();
        out.rowwise() += b;
        y = Mat(out.data(), x.rows(), s.output_size());
        break;
      }
      case LayerKind::MaxPool1d: {
        const int lout = s.out_length();
        y.resize(x.rows(), s.output_size());
        std::vector<int> winners(static_cast<size_t>(y.size()));
        for (Eigen::Index n = 0; n < x.rows(); ++n) {
          for (int o = 0; o < lout; ++o) {
            for (int c = 0; c < s.channels; ++c) {
              double best = -std::numeric_limits<double>::infinity();
              int arg = -1;
              for (int k = 0; k < s.pool; ++k) {
                const int pos = o * s.pool + k;
                if (pos >= s.length) break;
                const int idx = pos * s.channels + c;
                if (x(n, idx) > best || arg < 0) {
                  best = x(n, idx);
                  arg = idx;
                }
              }
              y(n, o * s.channels + c) = best;
              winners[static_cast<size_t>(n * y.cols() + o * s.channels + c)] = arg;
            }
          }
        }
        if (cache) cache->argmax[i] = std::move(winners);
        break;
      }
      case LayerKind::Relu: y = x.cwiseMax(0.0); break;
      case LayerKind::Sigmoid:
        y = x.unaryExpr([](double v) {
          // split on sign keeps exp() from overflowing
          return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        });
        break;
      case LayerKind::Tanh: y = x.array().tanh().matrix(); break;
    }
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->outputs.push_back(y);
    }
    x = std::move(y);
  }
  return x;
}

Batch Sequential::backward(const ForwardCache& cache, const Batch& grad_out,
                           Eigen::VectorXd& grad, size_t layers) const {
  if (cache.inputs.size() != specs_.size()) throw InvalidInput("backward needs a forward cache");
  if (grad.size() != params.size()) grad = Eigen::VectorXd::Zero(params.size());
  Batch g = grad_out;
  for (size_t ii = std::min(layers, specs_.size()); ii-- > 0;) {
    const auto& s = specs_[ii];
    const Batch& x = cache.inputs[ii];
    const Batch& y = cache.outputs[ii];
    if (g.rows() != y.rows() || g.cols() != y.cols()) throw InvalidInput("upstream gradient shape mismatch");
    const double* p = params.data() + offsets_[ii];
    double* gp = grad.data() + offsets_[ii];
    Batch gx;
    switch (s.kind) {
      case LayerKind::Dense: {
        ConstMat w(p, s.out, s.in);
        Mat gw(gp, s.out, s.in);
        Eigen::Map<Eigen::RowVectorXd> gb(gp + s.out * s.in, s.out);
        gw.noalias() += g.transpose() * x;
        gb += g.colwise().sum();
        gx = g * w;
        break;
      }
      case LayerKind::Conv1d: {
        const int kc = s.kernel * s.channels;
        const int lout = s.out_length();
        ConstMat w(p, s.out_channels, kc);
        Mat gw(gp, s.out_channels, kc);
        Eigen::Map<Eigen::RowVectorXd> gb(gp + s.out_channels * kc, s.out_channels);
        ConstMat gout(g.data(), g.rows() * lout, s.out_channels);
        const Batch cols = im2col(x, s);
        gw.noalias() += gout.transpose() * cols;
        gb += gout.colwise().sum();
        const Batch dcols = gout * w;
        gx = Batch::Zero(x.rows(), x.cols());
        col2im(dcols, s, gx);
        break;
      }
      case LayerKind::MaxPool1d: {
        const auto& winners = cache.argmax[ii];
        gx = Batch::Zero(x.rows(), x.cols());
        for (Eigen::Index n = 0; n < g.rows(); ++n)
          for (Eigen::Index j = 0; j < g.cols(); ++j)
            gx(n, winners[static_cast<size_t>(n * g.cols() + j)]) += g(n, j);
        break;
      }
      case LayerKind::Relu:
        gx = (x.array() > 0.0).select(g, 0.0);
        break;
      case LayerKind::Sigmoid:
        gx = (g.array() * y.array() * (1.0 - y.array())).matrix();
        break;
      case LayerKind::Tanh:
        gx = (g.array() * (1.0 - y.array().square())).matrix();
        break;
    }
    g = std::move(gx);
  }
  return g;
}

}  // namespace gridshed
