#include "prefviz/diffnet.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace prefviz::nn {

namespace {

void check_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw std::invalid_argument("network needs at least input and output sizes");
  for (int s : sizes)
    if (s <= 0) throw std::invalid_argument("layer sizes must be positive");
}

nlohmann::json tensors_to_json(const ParamTensors& tensors) {
  auto layers = nlohmann::json::array();
  for (const auto& layer : tensors) {
    std::vector<double> weight;
    weight.reserve(static_cast<size_t>(layer.weight.size()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) weight.push_back(layer.weight(r, c));
    std::vector<double> bias(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back({{"weight", weight}, {"bias", bias}});
  }
  return layers;
}

ParamTensors tensors_from_json(const nlohmann::json& layers, const std::vector<int>& sizes) {
  if (layers.size() + 1 != sizes.size()) throw std::runtime_error("layer count does not match header");
  ParamTensors out;
  for (size_t l = 0; l < layers.size(); ++l) {
    int in = sizes[l];
    int outd = sizes[l + 1];
    auto weight = layers[l].at("weight").get<std::vector<double>>();
    auto bias = layers[l].at("bias").get<std::vector<double>>();
    if (weight.size() != static_cast<size_t>(in) * outd || bias.size() != static_cast<size_t>(outd))
      throw std::runtime_error("tensor shape does not match header");
    DenseLayer layer{Eigen::MatrixXd(outd, in), Eigen::VectorXd(outd)};
    for (int r = 0; r < outd; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = weight[static_cast<size_t>(r) * in + c];
    for (int r = 0; r < outd; ++r) layer.bias[r] = bias[r];
    out.push_back(std::move(layer));
  }
  return out;
}

}  // namespace

Network::Network(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  check_sizes(sizes_);
  for (size_t l = 0; l + 1 < sizes_.size(); ++l)
    layers_.push_back({Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]), Eigen::VectorXd::Zero(sizes_[l + 1])});
}

Network Network::random(std::vector<int> layer_sizes, Rng& rng, double output_scale) {
  Network net(std::move(layer_sizes));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (size_t l = 0; l < net.layers_.size(); ++l) {
    auto& w = net.layers_[l].weight;
    double scale = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    if (l + 1 == net.layers_.size()) scale *= output_scale;
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = scale * normal(rng);
  }
  return net;
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& x) const {
  if (x.rows() != input_dim()) throw std::invalid_argument("input width does not match first layer");
  Eigen::MatrixXd h = x;
  for (size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * h;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.array().tanh().matrix();
    h = std::move(z);
  }
  return h;
}

Trace Network::trace(const Eigen::MatrixXd& x) const {
  if (x.rows() != input_dim()) throw std::invalid_argument("input width does not match first layer");
  Trace t;
  t.values.reserve(layers_.size() + 1);
  t.values.push_back(x);
  for (size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * t.values.back();
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.array().tanh().matrix();
    t.values.push_back(std::move(z));
  }
  return t;
}

Eigen::Index Network::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

Eigen::VectorXd Network::flatten() const { return nn::flatten(layers_); }

void Network::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("flat parameter size mismatch");
  Eigen::Index k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = flat[k++];
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = flat[k++];
  }
}

bool Network::all_finite() const {
  for (const auto& layer : layers_)
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

bool Network::operator==(const Network& other) const {
  if (sizes_ != other.sizes_) return false;
  for (size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weight != other.layers_[l].weight || layers_[l].bias != other.layers_[l].bias) return false;
  }
  return true;
}

ParamTensors zeros_like(const Network& net) {
  ParamTensors out;
  for (const auto& layer : net.layers())
    out.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                   Eigen::VectorXd::Zero(layer.bias.size())});
  return out;
}

void accumulate(ParamTensors& into, const ParamTensors& grads, double scale) {
  for (size_t l = 0; l < into.size(); ++l) {
    into[l].weight += scale * grads[l].weight;
    into[l].bias += scale * grads[l].bias;
  }
}

double squared_norm(const ParamTensors& grads) {
  double total = 0.0;
  for (const auto& g : grads) total += g.weight.squaredNorm() + g.bias.squaredNorm();
  return total;
}

Eigen::VectorXd flatten(const ParamTensors& grads) {
  Eigen::Index n = 0;
  for (const auto& g : grads) n += g.weight.size() + g.bias.size();
  Eigen::VectorXd flat(n);
  Eigen::Index k = 0;
  for (const auto& g : grads) {
    flat.segment(k, g.weight.size()) = Eigen::Map<const Eigen::VectorXd>(g.weight.data(), g.weight.size());
    k += g.weight.size();
    flat.segment(k, g.bias.size()) = g.bias;
    k += g.bias.size();
  }
  return flat;
}

ParamTensors backward(const Network& net, const Trace& trace, const Eigen::MatrixXd& d_output,
                      Eigen::MatrixXd* d_input) {
  const auto& layers = net.layers();
  if (d_output.rows() != net.output_dim() || d_output.cols() != trace.output().cols())
    throw std::invalid_argument("output gradient shape mismatch");
  ParamTensors grads(layers.size());
  Eigen::MatrixXd delta = d_output;
  for (size_t l = layers.size(); l-- > 0;) {
    const Eigen::MatrixXd& input = trace.values[l];
    grads[l].weight = delta * input.transpose();
    grads[l].bias = delta.rowwise().sum();
    if (l == 0 && d_input == nullptr) break;
    Eigen::MatrixXd upstream = layers[l].weight.transpose() * delta;
    if (l == 0) {
      *d_input = std::move(upstream);
      break;
    }
    // input is tanh(z) of the previous layer: dtanh = 1 - tanh^2.
    delta = (upstream.array() * (1.0 - input.array().square())).matrix();
  }
  return grads;
}

LossGrad grad(const Network& net, const LossFn& loss_fn, const Eigen::MatrixXd& x) {
  Trace t = net.trace(x);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(t.output().rows(), t.output().cols());
  double loss = loss_fn(t.output(), d_out);
  if (!std::isfinite(loss)) throw std::domain_error("loss is not finite");
  return {loss, backward(net, t, d_out)};
}

AdamState make_adam(const Network& net) {
  AdamState state;
  state.first_moment = zeros_like(net);
  state.second_moment = zeros_like(net);
  return state;
}

void adam_step(Network& net, const ParamTensors& grads, AdamState& state, double lr) {
  auto& layers = net.layers();
  if (grads.size() != layers.size() || state.first_moment.size() != layers.size())
    throw std::invalid_argument("Adam shapes do not match network");
  ++state.step;
  double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads[l].weight, state.first_moment[l].weight, state.second_moment[l].weight);
    update(layers[l].bias, grads[l].bias, state.first_moment[l].bias, state.second_moment[l].bias);
  }
}

void clip_global_norm(ParamTensors& grads, double max_norm) {
  double norm = std::sqrt(squared_norm(grads));
  if (norm <= max_norm || norm == 0.0) return;
  double scale = max_norm / norm;
  for (auto& g : grads) {
    g.weight *= scale;
    g.bias *= scale;
  }
}

nlohmann::json to_json(const Network& net) {
  return {{"format", "prefviz-mlp-1"}, {"layer_sizes", net.layer_sizes()}, {"layers", tensors_to_json(net.layers())}};
}

Network network_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "prefviz-mlp-1") throw std::runtime_error("not a prefviz network checkpoint");
  auto sizes = j.at("layer_sizes").get<std::vector<int>>();
  Network net(sizes);
  net.layers() = tensors_from_json(j.at("layers"), sizes);
  return net;
}

nlohmann::json to_json(const AdamState& state) {
  std::vector<int> sizes;
  for (const auto& layer : state.first_moment) {
    if (sizes.empty()) sizes.push_back(static_cast<int>(layer.weight.cols()));
    sizes.push_back(static_cast<int>(layer.weight.rows()));
  }
  return {{"layer_sizes", sizes},
          {"step", state.step},
          {"beta1", state.beta1},
          {"beta2", state.beta2},
          {"epsilon", state.epsilon},
          {"first_moment", tensors_to_json(state.first_moment)},
          {"second_moment", tensors_to_json(state.second_moment)}};
}

AdamState adam_from_json(const nlohmann::json& j) {
  auto sizes = j.at("layer_sizes").get<std::vector<int>>();
  AdamState state;
  state.step = j.at("step").get<long>();
  state.beta1 = j.at("beta1").get<double>();
  state.beta2 = j.at("beta2").get<double>();
  state.epsilon = j.at("epsilon").get<double>();
  state.first_moment = tensors_from_json(j.at("first_moment"), sizes);
  state.second_moment = tensors_from_json(j.at("second_moment"), sizes);
  return state;
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(net).dump();
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return network_from_json(nlohmann::json::parse(in));
}

}  // namespace prefviz::nn
