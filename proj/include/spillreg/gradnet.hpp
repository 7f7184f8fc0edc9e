#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spillreg/rng.hpp"

namespace spillreg::gradnet {

enum class Activation { kIdentity, kTanh, kRelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::kIdentity;

  bool operator==(const LayerShape&) const = default;
};

// Activations recorded by forward(); enough to backpropagate exactly.
struct Tape {
  std::uint64_t net_id = 0;
  std::uint64_t generation = 0;
  // values[0] is the input, values[i+1] the post-activation output of layer i.
  std::vector<std::vector<double>> values;
};

// Fully connected feed-forward network. Parameters live in one flat buffer,
// layer by layer, each as a row-major out x in weight block followed by the
// bias vector. Any write access through mutable_params() invalidates tapes.
class DenseNet {
 public:
  DenseNet() = default;
  // All parameters zero. Throws ShapeError if adjacent dims do not chain.
  explicit DenseNet(std::vector<LayerShape> layers);

  // dims = {in, h1, ..., out}; hidden layers use `hidden`, the last layer is
  // identity.
  static DenseNet mlp(const std::vector<std::size_t>& dims, Activation hidden);

  // Scaled uniform init with std gain / sqrt(fan_in): hidden_gain on hidden
  // layers, output_gain on the last layer; biases zero.
  void init(Rng& rng, double hidden_gain, double output_gain);

  const std::vector<LayerShape>& layers() const { return layers_; }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t param_count() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params();
  void set_params(std::span<const double> values);

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + layers_[layer].in * layers_[layer].out;
  }

  std::uint64_t id() const { return id_; }
  std::uint64_t generation() const { return generation_; }

  bool operator==(const DenseNet& other) const {
    return layers_ == other.layers_ && params_ == other.params_;
  }

 private:
  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::uint64_t id_ = 0;
  std::uint64_t generation_ = 0;
};

std::vector<double> forward(const DenseNet& net, std::span<const double> input,
                            Tape& tape);

struct Gradients {
  std::vector<double> params;  // same layout as DenseNet::params()
  std::vector<double> input;
};

// Gradients of dot(output, grad_output) with respect to every parameter and
// the input. Throws UsageError when the tape no longer matches the net.
Gradients backward(const DenseNet& net, const Tape& tape,
                   std::span<const double> grad_output);

// Same as backward() but adds the parameter gradient into `param_grads`.
std::vector<double> backward_accumulate(const DenseNet& net, const Tape& tape,
                                        std::span<const double> grad_output,
                                        std::span<double> param_grads);

enum class OptimizerKind { kAdam, kSgd };

struct AdamState {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  static AdamState for_params(std::size_t n, double lr,
                              OptimizerKind kind = OptimizerKind::kAdam);
};

// Bias-corrected Adam update in place (plain SGD when kind == kSgd).
// Non-finite gradients raise DivergenceError carrying the step index and leave
// both params and state untouched.
void adam_step(AdamState& opt, std::span<double> params,
               std::span<const double> grads);

}  // namespace spillreg::gradnet
