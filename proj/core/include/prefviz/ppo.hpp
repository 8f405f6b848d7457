#pragma once

// PPO with a tanh-squashed Gaussian policy and a separate value network,
// trained against an arbitrary (learned or oracle) state reward.

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "prefviz/common.hpp"
#include "prefviz/diffnet.hpp"
#include "prefviz/env.hpp"

namespace prefviz::ppo {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// obs_dim -> hidden -> 2 * act_dim. Rows [0, act_dim) are the pre-squash
/// mean, rows [act_dim, 2 act_dim) the log-std before clamping to
/// [kLogStdMin, kLogStdMax].
struct PolicyNet {
  nn::Network net;
  int act_dim = 0;

  static PolicyNet create(int obs_dim, int act_dim, const std::vector<int>& hidden, Rng& rng);
};

struct Agent {
  PolicyNet policy;
  nn::Network value;
  nn::AdamState policy_opt;
  nn::AdamState value_opt;
};

/// The value head starts at zero, so V = 0 before the first update.
Agent make_agent(const env::EnvSpec& spec, Rng& rng, const std::vector<int>& hidden = {64, 64});

struct ActionSample {
  Eigen::VectorXd raw;     // pre-squash Gaussian draw
  Eigen::VectorXd action;  // tanh(raw), in [-1, 1]
  double log_prob = 0.0;   // of `action`, squash-corrected
};

ActionSample sample_action(const PolicyNet& policy, const Eigen::VectorXd& obs, Rng& rng);

/// Squash-corrected log-density of tanh(raw) for each column pair.
Eigen::VectorXd log_prob(const PolicyNet& policy, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& raw);

/// tanh(mean): the deterministic action.
Eigen::VectorXd mean_action(const PolicyNet& policy, const Eigen::VectorXd& obs);

/// Batched state reward; each column of the argument is one observation.
using RewardFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd& obs)>;

class RunningStats {
 public:
  void update(const Eigen::VectorXd& values);
  double mean() const { return mean_; }
  double variance() const { return count_ > 0 ? m2_ / count_ : 0.0; }
  double count() const { return count_; }
  /// (x - mean) / sqrt(var + 1e-8)
  Eigen::VectorXd normalize(const Eigen::VectorXd& values) const;

 private:
  double count_ = 0.0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Transitions stored episode-major; column t of every matrix is step t.
struct RolloutBuffer {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd next_obs;
  Eigen::MatrixXd raw_actions;
  Eigen::MatrixXd actions;
  Eigen::VectorXd log_probs;
  Eigen::VectorXd rewards;             // r(next_obs) before normalization
  Eigen::VectorXd normalized_rewards;
  Eigen::VectorXd values;
  /// 1 where the episode ends at this step; the final step of a truncated
  /// buffer is 0 and bootstraps from V(next_obs).
  Eigen::VectorXd episode_end;
  Eigen::VectorXd advantages;          // GAE, before normalization
  Eigen::VectorXd returns;

  Eigen::Index size() const { return obs.cols(); }
};

/// GAE(gamma, lambda). `next_values[t]` is V(s_{t+1}); it is ignored where
/// episode_end[t] is 1.
Eigen::VectorXd gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, const Eigen::VectorXd& next_values,
                    const Eigen::VectorXd& episode_end, double gamma, double lambda);

struct PpoConfig {
  int rollout_steps = 2000;
  int epochs = 10;
  int minibatch = 250;
  double clip = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double lr = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  std::vector<int> hidden{64, 64};
};

/// Runs ceil(n_steps / episode_len) episodes in lockstep and keeps the first
/// n_steps transitions. An empty reward function means zero reward. Rewards
/// are normalized with `stats` after folding the new rewards in.
RolloutBuffer collect_rollouts(const Agent& agent, const env::EnvSpec& spec, int n_steps, const RewardFn& reward,
                               const PpoConfig& config, Rng& rng, RunningStats& stats);

struct MixedEpisode {
  std::vector<env::EnvState> states;  // post-step states, episode_len of them
  int switch_time = 0;
};

/// Policy actions for t < T and uniform random actions afterwards, with T
/// uniform on {0, ..., episode_len - 1} unless forced.
MixedEpisode mixed_rollout(const PolicyNet& policy, const env::EnvSpec& spec, Rng& rng,
                           std::optional<int> forced_switch = std::nullopt);

/// Uniform-random-action episode (post-step states).
std::vector<env::EnvState> random_rollout(const env::EnvSpec& spec, Rng& rng);

/// Minibatch of PPO training data.
struct PolicyBatch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd raw_actions;
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd advantages;
};

/// -mean(min(ratio * A, clip(ratio) * A)) and its parameter gradient.
nn::LossGrad policy_loss_grad(const PolicyNet& policy, const PolicyBatch& batch, double clip);
double policy_loss(const PolicyNet& policy, const PolicyBatch& batch, double clip);

/// coef * mean((V(obs) - target)^2) and gradient.
nn::LossGrad value_loss_grad(const nn::Network& value, const Eigen::MatrixXd& obs, const Eigen::VectorXd& targets,
                             double coef);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  bool aborted = false;
};

/// Clipped-surrogate epochs over shuffled minibatches. A non-finite loss
/// restores the parameters held before the call and reports `aborted`.
UpdateStats ppo_update(Agent& agent, const RolloutBuffer& buffer, const PpoConfig& config, Rng& rng);

/// Alternates collect_rollouts and ppo_update until `total_steps`
/// environment steps have been used. Returns the number of updates.
int train_phase(Agent& agent, const env::EnvSpec& spec, int total_steps, const RewardFn& reward,
                const PpoConfig& config, Rng& rng);

nlohmann::json to_json(const Agent& agent);
Agent agent_from_json(const nlohmann::json& j);

}  // namespace prefviz::ppo
