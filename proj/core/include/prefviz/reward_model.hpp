#pragma once

// Bradley-Terry reward model over vectorized observations.
//
//   P(s0 > s1) = exp(r(s0)) / (exp(r(s0)) + exp(r(s1))) = sigmoid(r(s0) - r(s1))
//   loss(D)    = -sum_D [ y log P + (1 - y) log(1 - P) ]

#include <span>
#include <vector>

#include <Eigen/Core>

#include "prefviz/common.hpp"
#include "prefviz/diffnet.hpp"

namespace prefviz::reward {

inline constexpr int kEmbeddingDim = 64;

/// Labelled pair; y = 1 means s0 is preferred.
struct Comparison {
  Eigen::VectorXd s0;
  Eigen::VectorXd s1;
  int y = 1;
};

/// obs_dim -> 64 -> 64 -> 1. The embedding is the second hidden layer.
struct RewardNet {
  nn::Network net;

  static RewardNet create(int obs_dim, Rng& rng);
  double reward(const Eigen::VectorXd& obs) const;
  /// One reward per column of `obs` (obs_dim x B).
  Eigen::VectorXd rewards(const Eigen::MatrixXd& obs) const;
};

/// sigmoid(r0 - r1) without overflow for any finite difference.
double preference_from_rewards(double r0, double r1);

double pref_prob(const RewardNet& model, const Eigen::VectorXd& s0, const Eigen::VectorXd& s1);

/// Summed cross-entropy. Throws std::invalid_argument on an empty batch.
double bt_loss(const RewardNet& model, std::span<const Comparison> batch);

/// Loss and parameter gradient of bt_loss.
nn::LossGrad bt_loss_grad(const RewardNet& model, std::span<const Comparison> batch);

struct TrainConfig {
  int steps = 500;
  int batch_size = 500;
  double lr = 3e-4;
};

inline constexpr int kInitialTrainSteps = 2000;

/// Adam on uniformly drawn minibatches: without replacement when
/// |data| >= batch_size, with replacement otherwise.
void train(RewardNet& model, std::span<const Comparison> data, const TrainConfig& config, Rng& rng);

/// Epoch-based variant: each epoch is one shuffled pass in minibatches.
void train_epochs(RewardNet& model, std::span<const Comparison> data, int epochs, int batch_size, double lr,
                  Rng& rng);

/// Width-64 penultimate activation.
Eigen::VectorXd embed(const RewardNet& model, const Eigen::VectorXd& obs);
/// Embeddings of each column of `obs`, as a (B x 64) row-per-state matrix.
Eigen::MatrixXd embed_batch(const RewardNet& model, const Eigen::MatrixXd& obs);

}  // namespace prefviz::reward
