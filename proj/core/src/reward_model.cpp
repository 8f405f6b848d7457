#include "prefviz/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace prefviz::reward {

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Stacks s0 of every pair into columns [0, B) and s1 into [B, 2B).
Eigen::MatrixXd stack_pairs(std::span<const Comparison> batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd x(batch.front().s0.size(), 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.col(i) = batch[i].s0;
    x.col(n + i) = batch[i].s1;
  }
  return x;
}

// Loss of one pair as a function of the reward gap d = r0 - r1.
double pair_loss(double gap, int y) { return y == 1 ? softplus(-gap) : softplus(gap); }

}  // namespace

RewardNet RewardNet::create(int obs_dim, Rng& rng) {
  return {nn::Network::random({obs_dim, kEmbeddingDim, kEmbeddingDim, 1}, rng)};
}

double RewardNet::reward(const Eigen::VectorXd& obs) const { return net.forward(obs)(0, 0); }

Eigen::VectorXd RewardNet::rewards(const Eigen::MatrixXd& obs) const { return net.forward(obs).row(0).transpose(); }

double preference_from_rewards(double r0, double r1) {
  // exp(r0) / (exp(r0) + exp(r1)) with the max subtracted first.
  double m = std::max(r0, r1);
  double e0 = std::exp(r0 - m);
  double e1 = std::exp(r1 - m);
  return e0 / (e0 + e1);
}

double pref_prob(const RewardNet& model, const Eigen::VectorXd& s0, const Eigen::VectorXd& s1) {
  return preference_from_rewards(model.reward(s0), model.reward(s1));
}

double bt_loss(const RewardNet& model, std::span<const Comparison> batch) {
  if (batch.empty()) throw std::invalid_argument("bt_loss needs a nonempty batch");
  Eigen::VectorXd r = model.rewards(stack_pairs(batch));
  const auto n = static_cast<Eigen::Index>(batch.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss += pair_loss(r[i] - r[n + i], batch[i].y);
  return loss;
}

nn::LossGrad bt_loss_grad(const RewardNet& model, std::span<const Comparison> batch) {
  if (batch.empty()) throw std::invalid_argument("bt_loss needs a nonempty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  return nn::grad(
      model.net,
      [&](const Eigen::MatrixXd& out, Eigen::MatrixXd& d_out) {
        double loss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          double gap = out(0, i) - out(0, n + i);
          loss += pair_loss(gap, batch[i].y);
          double d_gap = sigmoid(gap) - batch[i].y;
          d_out(0, i) = d_gap;
          d_out(0, n + i) = -d_gap;
        }
        return loss;
      },
      stack_pairs(batch));
}

void train(RewardNet& model, std::span<const Comparison> data, const TrainConfig& config, Rng& rng) {
  if (config.steps <= 0) return;
  if (data.empty()) throw std::invalid_argument("reward training needs at least one comparison");
  auto adam = nn::make_adam(model.net);
  const size_t batch = static_cast<size_t>(config.batch_size);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<Comparison> minibatch;
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  for (int step = 0; step < config.steps; ++step) {
    minibatch.clear();
    if (data.size() < batch) {
      for (size_t k = 0; k < batch; ++k) minibatch.push_back(data[pick(rng)]);
    } else {
      // Partial Fisher-Yates: the first `batch` slots become a uniform subset.
      for (size_t k = 0; k < batch; ++k) {
        std::uniform_int_distribution<size_t> swap_with(k, order.size() - 1);
        std::swap(order[k], order[swap_with(rng)]);
        minibatch.push_back(data[order[k]]);
      }
    }
    auto lg = bt_loss_grad(model, minibatch);
    nn::adam_step(model.net, lg.grads, adam, config.lr);
  }
}

void train_epochs(RewardNet& model, std::span<const Comparison> data, int epochs, int batch_size, double lr,
                  Rng& rng) {
  if (epochs <= 0) return;
  if (data.empty()) throw std::invalid_argument("reward training needs at least one comparison");
  auto adam = nn::make_adam(model.net);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<Comparison> minibatch;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(batch_size));
      minibatch.clear();
      for (size_t k = start; k < stop; ++k) minibatch.push_back(data[order[k]]);
      auto lg = bt_loss_grad(model, minibatch);
      nn::adam_step(model.net, lg.grads, adam, lr);
    }
  }
}

Eigen::VectorXd embed(const RewardNet& model, const Eigen::VectorXd& obs) {
  return model.net.trace(obs).penultimate().col(0);
}

Eigen::MatrixXd embed_batch(const RewardNet& model, const Eigen::MatrixXd& obs) {
  return model.net.trace(obs).penultimate().transpose();
}

}  // namespace prefviz::reward
