#include "gridshed/tensor.hpp"

#include <functional>
#include <numeric>

#include "gridshed/errors.hpp"

namespace gridshed {

using nlohmann::json;

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != numel()) throw InvalidInput("tensor data length does not match shape");
}

Tensor Tensor::zeros(std::vector<int> s) {
  Tensor t;
  t.shape = std::move(s);
  t.data.assign(t.numel(), 0.0);
  return t;
}

size_t Tensor::numel() const {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidInput("negative tensor dimension");
    n *= static_cast<size_t>(d);
  }
  return n;
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv1d: return "conv1d";
    case LayerKind::MaxPool1d: return "maxpool1d";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::Tanh: return "tanh";
  }
  return "relu";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "dense") return LayerKind::Dense;
  if (s == "conv1d") return LayerKind::Conv1d;
  if (s == "maxpool1d") return LayerKind::MaxPool1d;
  if (s == "relu") return LayerKind::Relu;
  if (s == "sigmoid") return LayerKind::Sigmoid;
  if (s == "tanh") return LayerKind::Tanh;
  throw InvalidInput("unknown layer kind '" + s + "'");
}

LayerSpec LayerSpec::dense(int in, int out) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.in = in;
  s.out = out;
  return s;
}

LayerSpec LayerSpec::conv1d(int length, int channels, int out_channels, int kernel, int stride,
                            int pad) {
  LayerSpec s;
  s.kind = LayerKind::Conv1d;
  s.length = length;
  s.channels = channels;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  return s;
}

LayerSpec LayerSpec::maxpool1d(int length, int channels, int pool, bool ceil_mode) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool1d;
  s.length = length;
  s.channels = channels;
  s.pool = pool;
  s.ceil_mode = ceil_mode;
  return s;
}

namespace {
LayerSpec activation(LayerKind k, int n) {
  LayerSpec s;
  s.kind = k;
  s.in = n;
  return s;
}
}  // namespace

LayerSpec LayerSpec::relu(int n) { return activation(LayerKind::Relu, n); }
LayerSpec LayerSpec::sigmoid(int n) { return activation(LayerKind::Sigmoid, n); }
LayerSpec LayerSpec::tanh(int n) { return activation(LayerKind::Tanh, n); }

int LayerSpec::out_length() const {
  switch (kind) {
    case LayerKind::Conv1d: return (length + 2 * pad - kernel) / stride + 1;
    case LayerKind::MaxPool1d: return ceil_mode ? (length + pool - 1) / pool : length / pool;
    default: return 0;
  }
}

int LayerSpec::input_size() const {
  switch (kind) {
    case LayerKind::Conv1d:
    case LayerKind::MaxPool1d: return length * channels;
    default: return in;
  }
}

int LayerSpec::output_size() const {
  switch (kind) {
    case LayerKind::Dense: return out;
    case LayerKind::Conv1d: return out_length() * out_channels;
    case LayerKind::MaxPool1d: return out_length() * channels;
    default: return in;
  }
}

int LayerSpec::param_count() const {
  switch (kind) {
    case LayerKind::Dense: return out * in + out;
    case LayerKind::Conv1d: return out_channels * kernel * channels + out_channels;
    default: return 0;
  }
}

void to_json(json& j, const LayerSpec& s) {
  j = {{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case LayerKind::Dense:
      j["in"] = s.in;
      j["out"] = s.out;
      break;
    case LayerKind::Conv1d:
      j["length"] = s.length;
      j["channels"] = s.channels;
      j["out_channels"] = s.out_channels;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      j["pad"] = s.pad;
      break;
    case LayerKind::MaxPool1d:
      j["length"] = s.length;
      j["channels"] = s.channels;
      j["pool"] = s.pool;
      j["ceil_mode"] = s.ceil_mode;
      break;
    default:
      j["in"] = s.in;
  }
}

void from_json(const json& j, LayerSpec& s) {
  s = LayerSpec{};
  s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  s.in = j.value("in", 0);
  s.out = j.value("out", 0);
  s.length = j.value("length", 0);
  s.channels = j.value("channels", 0);
  s.out_channels = j.value("out_channels", 0);
  s.kernel = j.value("kernel", 1);
  s.stride = j.value("stride", 1);
  s.pad = j.value("pad", 0);
  s.pool = j.value("pool", 2);
  s.ceil_mode = j.value("ceil_mode", false);
}

Tensor forward(const std::vector<LayerSpec>& specs, const Eigen::VectorXd& params,
               const Tensor& input) {
  if (input.shape.size() != 2) throw InvalidInput("forward expects a [batch, features] tensor");
  Sequential net(specs);
  if (params.size() != net.param_count()) throw InvalidInput("parameter count mismatch");
  net.params = params;
  Batch x = Eigen::Map<const Batch>(input.data.data(), input.shape[0], input.shape[1]);
  Batch y = net.forward(x);
  return Tensor({static_cast<int>(y.rows()), static_cast<int>(y.cols())},
                std::vector<double>(y.data(), y.data() + y.size()));
}

}  // namespace gridshed
