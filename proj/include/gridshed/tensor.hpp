#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridshed/util.hpp"

namespace gridshed {

/// Row-major batch: one sample per row.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;  // row-major

  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<double> data);
  static Tensor zeros(std::vector<int> shape);
  size_t numel() const;
};

enum class LayerKind { Dense, Conv1d, MaxPool1d, Relu, Sigmoid, Tanh };
std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

/// Sequence-shaped layers read a sample as `length` positions of `channels`
/// values, position-major (so bus-major feature rows are 4-channel signals).
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  int in = 0, out = 0;                 // dense; activations use `in` only
  int length = 0, channels = 0;        // conv1d / maxpool1d input
  int out_channels = 0, kernel = 1, stride = 1, pad = 0;  // conv1d
  int pool = 2;                        // maxpool1d
  bool ceil_mode = false;              // maxpool1d: keep a partial last window

  static LayerSpec dense(int in, int out);
  static LayerSpec conv1d(int length, int channels, int out_channels, int kernel,
                          int stride = 1, int pad = 0);
  static LayerSpec maxpool1d(int length, int channels, int pool, bool ceil_mode = false);
  static LayerSpec relu(int n);
  static LayerSpec sigmoid(int n);
  static LayerSpec tanh(int n);

  int input_size() const;
  int output_size() const;
  int out_length() const;  // conv1d / maxpool1d
  int param_count() const;
};
void to_json(nlohmann::json& j, const LayerSpec& s);
void from_json(const nlohmann::json& j, LayerSpec& s);

/// Per-layer activations kept by a forward pass for the backward pass.
struct ForwardCache {
  std::vector<Batch> inputs;                   // input of each layer
  std::vector<Batch> outputs;                  // output of each layer
  std::vector<std::vector<int>> argmax;        // maxpool winners, flat per layer
};

/// A chain of layers over one flat parameter vector. Dense weights are
/// stored out x in (row-major) followed by the bias; conv1d weights are
/// out_channels x (kernel * channels) followed by the bias.
class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerSpec> specs);

  const std::vector<LayerSpec>& specs() const { return specs_; }
  int input_size() const;
  int output_size() const;
  int param_count() const { return static_cast<int>(params.size()); }

  /// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
  void init(Rng& rng);

  Batch forward(const Batch& x, ForwardCache* cache = nullptr) const;
  /// Accumulates parameter gradients into `grad` (resized and zeroed when
  /// its size is wrong) and returns the gradient with respect to the input.
  /// With `layers` < number of layers, `grad_out` is taken at the output of
  /// layer `layers - 1` and only the first `layers` layers are traversed.
  Batch backward(const ForwardCache& cache, const Batch& grad_out, Eigen::VectorXd& grad,
                 size_t layers = static_cast<size_t>(-1)) const;

  Eigen::VectorXd params;

 private:
  std::vector<LayerSpec> specs_;
  std::vector<int> offsets_;
};

/// Functional entry point over the Tensor type: input shape [B, features].
Tensor forward(const std::vector<LayerSpec>& specs, const Eigen::VectorXd& params,
               const Tensor& input);

}  // namespace gridshed
