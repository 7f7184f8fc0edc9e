#include "spillreg/gradnet.hpp"

#include <atomic>
#include <cmath>

#include "spillreg/errors.hpp"

namespace spillreg::gradnet {

namespace {

std::atomic<std::uint64_t> next_net_id{1};

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(z);
    case Activation::kRelu:
      return z > 0.0 ? z : 0.0;
    case Activation::kIdentity:
      break;
  }
  return z;
}

// Derivative expressed through the activation output y.
double activate_grad(Activation a, double y) {
  switch (a) {
    case Activation::kTanh:
      return 1.0 - y * y;
    case Activation::kRelu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity:
      break;
  }
  return 1.0;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
    case Activation::kIdentity:
      break;
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw InputError("unknown activation '" + name + "'");
}

DenseNet::DenseNet(std::vector<LayerShape> layers)
    : layers_(std::move(layers)), id_(next_net_id++) {
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.in == 0 || l.out == 0) throw ShapeError("layer dims must be positive");
    if (i > 0 && layers_[i - 1].out != l.in) {
      throw ShapeError("layer " + std::to_string(i) + " expects " +
                       std::to_string(l.in) + " inputs but previous layer has " +
                       std::to_string(layers_[i - 1].out) + " outputs");
    }
    offsets_.push_back(offset);
    offset += l.in * l.out + l.out;
  }
  params_.assign(offset, 0.0);
}

DenseNet DenseNet::mlp(const std::vector<std::size_t>& dims,
                       Activation hidden) {
  if (dims.size() < 2) throw ShapeError("mlp needs input and output dims");
  std::vector<LayerShape> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    layers.push_back({dims[i], dims[i + 1], last ? Activation::kIdentity : hidden});
  }
  return DenseNet(std::move(layers));
}

void DenseNet::init(Rng& rng, double hidden_gain, double output_gain) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const double gain = i + 1 == layers_.size() ? output_gain : hidden_gain;
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(l.in));
    double* w = params_.data() + weight_offset(i);
    for (std::size_t k = 0; k < l.in * l.out; ++k) {
      w[k] = rng.uniform(-bound, bound);
    }
    double* b = params_.data() + bias_offset(i);
    for (std::size_t k = 0; k < l.out; ++k) b[k] = 0.0;
  }
  ++generation_;
}

std::size_t DenseNet::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().in;
}

std::size_t DenseNet::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().out;
}

std::span<double> DenseNet::mutable_params() {
  ++generation_;
  return params_;
}

void DenseNet::set_params(std::span<const double> values) {
  if (values.size() != params_.size()) {
    throw ShapeError("expected " + std::to_string(params_.size()) +
                     " parameters, got " + std::to_string(values.size()));
  }
  params_.assign(values.begin(), values.end());
  ++generation_;
}

std::vector<double> forward(const DenseNet& net, std::span<const double> input,
                            Tape& tape) {
  if (input.size() != net.input_dim()) {
    throw ShapeError("network expects " + std::to_string(net.input_dim()) +
                     " inputs, got " + std::to_string(input.size()));
  }
  const auto& layers = net.layers();
  const auto params = net.params();
  tape.net_id = net.id();
  tape.generation = net.generation();
  tape.values.resize(layers.size() + 1);
  tape.values[0].assign(input.begin(), input.end());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const double* w = params.data() + net.weight_offset(i);
    const double* b = params.data() + net.bias_offset(i);
    const auto& x = tape.values[i];
    auto& y = tape.values[i + 1];
    y.resize(l.out);
    for (std::size_t r = 0; r < l.out; ++r) {
      double z = b[r];
      const double* row = w + r * l.in;
      for (std::size_t c = 0; c < l.in; ++c) z += row[c] * x[c];
      y[r] = activate(l.activation, z);
    }
  }
  return tape.values.back();
}

std::vector<double> backward_accumulate(const DenseNet& net, const Tape& tape,
                                        std::span<const double> grad_output,
                                        std::span<double> param_grads) {
  const auto& layers = net.layers();
  if (tape.net_id != net.id() || tape.generation != net.generation() ||
      tape.values.size() != layers.size() + 1) {
    throw UsageError("tape does not belong to the current network parameters");
  }
  if (grad_output.size() != net.output_dim()) {
    throw ShapeError("grad_output has wrong length");
  }
  if (param_grads.size() != net.param_count()) {
    throw ShapeError("gradient buffer has wrong length");
  }
  const auto params = net.params();
  std::vector<double> upstream(grad_output.begin(), grad_output.end());
  std::vector<double> delta;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& l = layers[i];
    const auto& x = tape.values[i];
    const auto& y = tape.values[i + 1];
    delta.resize(l.out);
    for (std::size_t r = 0; r < l.out; ++r) {
      delta[r] = upstream[r] * activate_grad(l.activation, y[r]);
    }
    const double* w = params.data() + net.weight_offset(i);
    double* gw = param_grads.data() + net.weight_offset(i);
    double* gb = param_grads.data() + net.bias_offset(i);
    std::vector<double> next(l.in, 0.0);
    for (std::size_t r = 0; r < l.out; ++r) {
      const double d = delta[r];
      gb[r] += d;
      const double* row = w + r * l.in;
      double* grow = gw + r * l.in;
      for (std::size_t c = 0; c < l.in; ++c) {
        grow[c] += d * x[c];
        next[c] += d * row[c];
      }
    }
    upstream = std::move(next);
  }
  return upstream;
}

Gradients backward(const DenseNet& net, const Tape& tape,
                   std::span<const double> grad_output) {
  Gradients g;
  g.params.assign(net.param_count(), 0.0);
  g.input = backward_accumulate(net, tape, grad_output, g.params);
  return g;
}

AdamState AdamState::for_params(std::size_t n, double lr, OptimizerKind kind) {
  AdamState s;
  s.kind = kind;
  s.lr = lr;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

void adam_step(AdamState& opt, std::span<double> params,
               std::span<const double> grads) {
  if (params.size() != grads.size() || opt.m.size() != params.size() ||
      opt.v.size() != params.size()) {
    throw ShapeError("optimizer state, params and grads must share a shape");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw DivergenceError(opt.step, "non-finite gradient at index " +
                                          std::to_string(i));
    }
  }
  ++opt.step;
  if (opt.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= opt.lr * grads[i];
    return;
  }
  const double t = static_cast<double>(opt.step);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
    const double m_hat = opt.m[i] / bc1;
    const double v_hat = opt.v[i] / bc2;
    params[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
  }
}

}  // namespace spillreg::gradnet
