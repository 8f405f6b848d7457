#include "prefviz/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace prefviz::ppo {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(u)^2), stable for large |u|.
double log_squash_jacobian(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

double clamp_log_std(double v) { return std::clamp(v, kLogStdMin, kLogStdMax); }

// Gaussian log-density of `raw` plus squash correction, per column, from
// precomputed network outputs.
Eigen::VectorXd log_prob_from_output(const Eigen::MatrixXd& out, const Eigen::MatrixXd& raw, int act_dim) {
  Eigen::VectorXd lp(raw.cols());
  for (Eigen::Index t = 0; t < raw.cols(); ++t) {
    double sum = 0.0;
    for (int d = 0; d < act_dim; ++d) {
      double mean = out(d, t);
      double log_std = clamp_log_std(out(act_dim + d, t));
      double z = (raw(d, t) - mean) * std::exp(-log_std);
      sum += -0.5 * z * z - log_std - kHalfLog2Pi - log_squash_jacobian(raw(d, t));
    }
    lp[t] = sum;
  }
  return lp;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(idx[k]);
  return out;
}

Eigen::VectorXd entries(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[idx[k]];
  return out;
}

Eigen::VectorXd uniform_action(int act_dim, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd a(act_dim);
  for (int d = 0; d < act_dim; ++d) a[d] = u(rng);
  return a;
}

}  // namespace

PolicyNet PolicyNet::create(int obs_dim, int act_dim, const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(2 * act_dim);
  return {nn::Network::random(sizes, rng, 0.01), act_dim};
}

Agent make_agent(const env::EnvSpec& spec, Rng& rng, const std::vector<int>& hidden) {
  Agent agent;
  agent.policy = PolicyNet::create(spec.obs_dim, spec.act_dim, hidden, rng);
  std::vector<int> sizes{spec.obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  agent.value = nn::Network::random(sizes, rng, 0.0);
  agent.policy_opt = nn::make_adam(agent.policy.net);
  agent.value_opt = nn::make_adam(agent.value);
  return agent;
}

ActionSample sample_action(const PolicyNet& policy, const Eigen::VectorXd& obs, Rng& rng) {
  Eigen::VectorXd out = policy.net.forward(obs).col(0);
  std::normal_distribution<double> normal(0.0, 1.0);
  ActionSample s;
  s.raw.resize(policy.act_dim);
  for (int d = 0; d < policy.act_dim; ++d) s.raw[d] = out[d] + std::exp(clamp_log_std(out[policy.act_dim + d])) * normal(rng);
  s.action = s.raw.array().tanh();
  s.log_prob = log_prob_from_output(out, s.raw, policy.act_dim)[0];
  return s;
}

Eigen::VectorXd log_prob(const PolicyNet& policy, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& raw) {
  return log_prob_from_output(policy.net.forward(obs), raw, policy.act_dim);
}

Eigen::VectorXd mean_action(const PolicyNet& policy, const Eigen::VectorXd& obs) {
  return policy.net.forward(obs).col(0).head(policy.act_dim).array().tanh();
}

void RunningStats::update(const Eigen::VectorXd& values) {
  if (values.size() == 0) return;
  // Chan et al. parallel merge of (count, mean, M2).
  double n = static_cast<double>(values.size());
  double batch_mean = values.mean();
  double batch_m2 = (values.array() - batch_mean).square().sum();
  double delta = batch_mean - mean_;
  double total = count_ + n;
  mean_ += delta * n / total;
  m2_ += batch_m2 + delta * delta * count_ * n / total;
  count_ = total;
}

Eigen::VectorXd RunningStats::normalize(const Eigen::VectorXd& values) const {
  return (values.array() - mean_) / std::sqrt(variance() + 1e-8);
}

Eigen::VectorXd gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, const Eigen::VectorXd& next_values,
                    const Eigen::VectorXd& episode_end, double gamma, double lambda) {
  const Eigen::Index n = rewards.size();
  Eigen::VectorXd adv(n);
  double running = 0.0;
  for (Eigen::Index t = n; t-- > 0;) {
    double cont = episode_end[t] > 0.5 ? 0.0 : 1.0;
    double delta = rewards[t] + gamma * cont * next_values[t] - values[t];
    running = delta + gamma * lambda * cont * running;
    adv[t] = running;
  }
  return adv;
}

RolloutBuffer collect_rollouts(const Agent& agent, const env::EnvSpec& spec, int n_steps, const RewardFn& reward,
                               const PpoConfig& config, Rng& rng, RunningStats& stats) {
  if (n_steps <= 0) throw std::invalid_argument("rollout needs a positive step count");
  const int len = spec.episode_len;
  const int episodes = (n_steps + len - 1) / len;
  const int act_dim = spec.act_dim;

  RolloutBuffer buf;
  buf.obs.resize(spec.obs_dim, n_steps);
  buf.next_obs.resize(spec.obs_dim, n_steps);
  buf.raw_actions.resize(act_dim, n_steps);
  buf.actions.resize(act_dim, n_steps);
  buf.log_probs.resize(n_steps);
  buf.episode_end = Eigen::VectorXd::Zero(n_steps);

  std::vector<env::EnvState> states;
  for (int e = 0; e < episodes; ++e) states.push_back(env::reset(spec, rng));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd batch_obs(spec.obs_dim, episodes);
  Eigen::MatrixXd raw(act_dim, episodes);
  for (int t = 0; t < len; ++t) {
    for (int e = 0; e < episodes; ++e) batch_obs.col(e) = states[e].obs;
    Eigen::MatrixXd out = agent.policy.net.forward(batch_obs);
    for (int e = 0; e < episodes; ++e)
      for (int d = 0; d < act_dim; ++d) raw(d, e) = out(d, e) + std::exp(clamp_log_std(out(act_dim + d, e))) * normal(rng);
    Eigen::VectorXd lp = log_prob_from_output(out, raw, act_dim);
    for (int e = 0; e < episodes; ++e) {
      int slot = e * len + t;
      env::Action action{raw.col(e).array().tanh()};
      env::EnvState next = env::step(spec, states[e], action);
      if (slot < n_steps) {
        buf.obs.col(slot) = states[e].obs;
        buf.next_obs.col(slot) = next.obs;
        buf.raw_actions.col(slot) = raw.col(e);
        buf.actions.col(slot) = action.act;
        buf.log_probs[slot] = lp[e];
        if (t == len - 1) buf.episode_end[slot] = 1.0;
      }
      states[e] = std::move(next);
    }
  }

  buf.rewards = reward ? reward(buf.next_obs) : Eigen::VectorXd::Zero(n_steps);
  stats.update(buf.rewards);
  buf.normalized_rewards = stats.normalize(buf.rewards);
  buf.values = agent.value.forward(buf.obs).row(0).transpose();
  Eigen::VectorXd next_values = agent.value.forward(buf.next_obs).row(0).transpose();
  buf.advantages = gae(buf.normalized_rewards, buf.values, next_values, buf.episode_end, config.gamma, config.gae_lambda);
  buf.returns = buf.advantages + buf.values;
  return buf;
}

MixedEpisode mixed_rollout(const PolicyNet& policy, const env::EnvSpec& spec, Rng& rng,
                           std::optional<int> forced_switch) {
  MixedEpisode ep;
  if (forced_switch) {
    if (*forced_switch < 0 || *forced_switch >= spec.episode_len) throw std::invalid_argument("switch time out of range");
    ep.switch_time = *forced_switch;
  } else {
    ep.switch_time = std::uniform_int_distribution<int>(0, spec.episode_len - 1)(rng);
  }
  env::EnvState state = env::reset(spec, rng);
  for (int t = 0; t < spec.episode_len; ++t) {
    Eigen::VectorXd act = t < ep.switch_time ? sample_action(policy, state.obs, rng).action
                                             : uniform_action(spec.act_dim, rng);
    state = env::step(spec, state, env::Action{act});
    ep.states.push_back(state);
  }
  return ep;
}

std::vector<env::EnvState> random_rollout(const env::EnvSpec& spec, Rng& rng) {
  std::vector<env::EnvState> out;
  env::EnvState state = env::reset(spec, rng);
  for (int t = 0; t < spec.episode_len; ++t) {
    state = env::step(spec, state, env::Action{uniform_action(spec.act_dim, rng)});
    out.push_back(state);
  }
  return out;
}

namespace {

// Loss value and dLoss/dOutput for the clipped surrogate.
double surrogate(const Eigen::MatrixXd& out, const PolicyBatch& batch, int act_dim, double clip, double entropy_coef,
                 Eigen::MatrixXd* d_out) {
  const Eigen::Index n = batch.raw_actions.cols();
  Eigen::VectorXd lp = log_prob_from_output(out, batch.raw_actions, act_dim);
  double loss = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    double ratio = std::exp(lp[t] - batch.old_log_probs[t]);
    double adv = batch.advantages[t];
    double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    loss -= std::min(ratio * adv, clipped * adv);
    bool active = adv >= 0.0 ? ratio <= 1.0 + clip : ratio >= 1.0 - clip;
    double d_logp = active ? -ratio * adv / static_cast<double>(n) : 0.0;
    if (!d_out) continue;
    for (int d = 0; d < act_dim; ++d) {
      double mean = out(d, t);
      double raw_log_std = out(act_dim + d, t);
      double log_std = clamp_log_std(raw_log_std);
      double inv_var = std::exp(-2.0 * log_std);
      double diff = batch.raw_actions(d, t) - mean;
      (*d_out)(d, t) = d_logp * diff * inv_var;
      bool inside = raw_log_std > kLogStdMin && raw_log_std < kLogStdMax;
      double d_ls = d_logp * (diff * diff * inv_var - 1.0) - entropy_coef / static_cast<double>(n);
      (*d_out)(act_dim + d, t) = inside ? d_ls : 0.0;
    }
  }
  loss /= static_cast<double>(n);
  if (entropy_coef != 0.0) {
    double ent = 0.0;
    for (Eigen::Index t = 0; t < n; ++t)
      for (int d = 0; d < act_dim; ++d) ent += clamp_log_std(out(act_dim + d, t)) + 0.5 + kHalfLog2Pi;
    loss -= entropy_coef * ent / static_cast<double>(n);
  }
  return loss;
}

}  // namespace

nn::LossGrad policy_loss_grad(const PolicyNet& policy, const PolicyBatch& batch, double clip) {
  return nn::grad(
      policy.net,
      [&](const Eigen::MatrixXd& out, Eigen::MatrixXd& d_out) {
        return surrogate(out, batch, policy.act_dim, clip, 0.0, &d_out);
      },
      batch.obs);
}

double policy_loss(const PolicyNet& policy, const PolicyBatch& batch, double clip) {
  return surrogate(policy.net.forward(batch.obs), batch, policy.act_dim, clip, 0.0, nullptr);
}

nn::LossGrad value_loss_grad(const nn::Network& value, const Eigen::MatrixXd& obs, const Eigen::VectorXd& targets,
                             double coef) {
  return nn::grad(
      value,
      [&](const Eigen::MatrixXd& out, Eigen::MatrixXd& d_out) {
        const auto n = static_cast<double>(targets.size());
        Eigen::RowVectorXd err = out.row(0) - targets.transpose();
        d_out.row(0) = 2.0 * coef * err / n;
        return coef * err.squaredNorm() / n;
      },
      obs);
}

UpdateStats ppo_update(Agent& agent, const RolloutBuffer& buffer, const PpoConfig& config, Rng& rng) {
  const Eigen::Index n = buffer.size();
  if (n == 0) throw std::invalid_argument("empty rollout buffer");
  Agent backup = agent;

  Eigen::VectorXd adv = buffer.advantages;
  double mean = adv.mean();
  double sd = std::sqrt((adv.array() - mean).square().mean());
  adv = (adv.array() - mean) / (sd + 1e-8);

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto mb = static_cast<size_t>(std::max(1, config.minibatch));
  UpdateStats stats;
  int batches = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += mb) {
      std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + mb)));
      PolicyBatch batch{columns(buffer.obs, idx), columns(buffer.raw_actions, idx), entries(buffer.log_probs, idx),
                        entries(adv, idx)};
      nn::LossGrad pg;
      nn::LossGrad vg;
      try {
        pg = nn::grad(
            agent.policy.net,
            [&](const Eigen::MatrixXd& out, Eigen::MatrixXd& d_out) {
              return surrogate(out, batch, agent.policy.act_dim, config.clip, config.entropy_coef, &d_out);
            },
            batch.obs);
        vg = value_loss_grad(agent.value, batch.obs, entries(buffer.returns, idx), config.value_coef);
      } catch (const std::domain_error&) {
        agent = std::move(backup);
        return {stats.policy_loss, stats.value_loss, true};
      }
      if (!std::isfinite(pg.loss) || !std::isfinite(vg.loss)) {
        agent = std::move(backup);
        return {stats.policy_loss, stats.value_loss, true};
      }
      nn::clip_global_norm(pg.grads, config.max_grad_norm);
      nn::clip_global_norm(vg.grads, config.max_grad_norm);
      nn::adam_step(agent.policy.net, pg.grads, agent.policy_opt, config.lr);
      nn::adam_step(agent.value, vg.grads, agent.value_opt, config.lr);
      stats.policy_loss += pg.loss;
      stats.value_loss += vg.loss;
      ++batches;
    }
  }
  if (!agent.policy.net.all_finite() || !agent.value.all_finite()) {
    agent = std::move(backup);
    stats.aborted = true;
    return stats;
  }
  stats.policy_loss /= batches;
  stats.value_loss /= batches;
  return stats;
}

int train_phase(Agent& agent, const env::EnvSpec& spec, int total_steps, const RewardFn& reward,
                const PpoConfig& config, Rng& rng) {
  RunningStats stats;
  int used = 0;
  int updates = 0;
  while (used < total_steps) {
    int steps = std::min(config.rollout_steps, total_steps - used);
    auto buffer = collect_rollouts(agent, spec, steps, reward, config, rng, stats);
    ppo_update(agent, buffer, config, rng);
    used += steps;
    ++updates;
  }
  return updates;
}

nlohmann::json to_json(const Agent& agent) {
  return {{"act_dim", agent.policy.act_dim},
          {"policy", nn::to_json(agent.policy.net)},
          {"value", nn::to_json(agent.value)},
          {"policy_opt", nn::to_json(agent.policy_opt)},
          {"value_opt", nn::to_json(agent.value_opt)}};
}

Agent agent_from_json(const nlohmann::json& j) {
  Agent agent;
  agent.policy.act_dim = j.at("act_dim").get<int>();
  agent.policy.net = nn::network_from_json(j.at("policy"));
  agent.value = nn::network_from_json(j.at("value"));
  agent.policy_opt = nn::adam_from_json(j.at("policy_opt"));
  agent.value_opt = nn::adam_from_json(j.at("value_opt"));
  return agent;
}

}  // namespace prefviz::ppo
