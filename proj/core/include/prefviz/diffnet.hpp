#pragma once

// Small dense MLP engine: batched forward pass, exact reverse-mode gradients
// and Adam. Batches are column-major: an input batch is (in_dim x B), one
// sample per column.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "prefviz/common.hpp"

namespace prefviz::nn {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Parameter-shaped gradient (or moment) storage.
using ParamTensors = std::vector<DenseLayer>;

/// Per-layer activations of one forward pass. `values[0]` is the input and
/// `values[l + 1]` the output of layer l (tanh for hidden layers, identity
/// for the last one).
struct Trace {
  std::vector<Eigen::MatrixXd> values;
  const Eigen::MatrixXd& output() const { return values.back(); }
  /// Last hidden activation (the input of the output layer).
  const Eigen::MatrixXd& penultimate() const { return values[values.size() - 2]; }
};

class Network {
 public:
  Network() = default;
  /// All-zero parameters.
  explicit Network(std::vector<int> layer_sizes);
  /// Gaussian init with std 1/sqrt(fan_in); the output layer is further
  /// scaled by `output_scale`. Biases start at zero.
  static Network random(std::vector<int> layer_sizes, Rng& rng, double output_scale = 1.0);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Throws std::invalid_argument when x.rows() != input_dim().
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Trace trace(const Eigen::MatrixXd& x) const;

  Eigen::Index parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
  bool all_finite() const;

  bool operator==(const Network& other) const;

 private:
  std::vector<int> sizes_;
  std::vector<DenseLayer> layers_;
};

ParamTensors zeros_like(const Network& net);
void accumulate(ParamTensors& into, const ParamTensors& grads, double scale = 1.0);
double squared_norm(const ParamTensors& grads);
Eigen::VectorXd flatten(const ParamTensors& grads);

/// Backpropagates `d_output` (out_dim x B, dLoss/dOutput) through the pass
/// recorded in `trace`. If `d_input` is non-null it receives dLoss/dInput.
ParamTensors backward(const Network& net, const Trace& trace, const Eigen::MatrixXd& d_output,
                      Eigen::MatrixXd* d_input = nullptr);

/// Scalar loss of a network output batch. Must fill `d_output` with
/// dLoss/dOutput (same shape as `output`).
using LossFn = std::function<double(const Eigen::MatrixXd& output, Eigen::MatrixXd& d_output)>;

struct LossGrad {
  double loss = 0.0;
  ParamTensors grads;
};

/// Throws std::domain_error when the loss is not finite.
LossGrad grad(const Network& net, const LossFn& loss_fn, const Eigen::MatrixXd& x);

struct AdamState {
  ParamTensors first_moment;
  ParamTensors second_moment;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam(const Network& net);

/// One bias-corrected Adam update, in place.
void adam_step(Network& net, const ParamTensors& grads, AdamState& state, double lr);

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
void clip_global_norm(ParamTensors& grads, double max_norm);

// Checkpoint format: {"format": "prefviz-mlp-1", "layer_sizes": [...],
// "layers": [{"weight": [row-major...], "bias": [...]}, ...]}. Doubles are
// written in shortest round-trip form so reload is exact.
nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j);

void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace prefviz::nn
