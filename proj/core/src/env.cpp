#include "prefviz/env.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace prefviz::env {

EnvSpec make_spec(EnvName name) {
  EnvSpec spec;
  spec.name = name;
  switch (name) {
    case EnvName::kPlanarReacher:
      spec.joints = 2;
      break;
    case EnvName::kTiltStand:
      spec.joints = 1;
      spec.drift = kTiltDrift;
      break;
    case EnvName::kChainCurl:
      spec.joints = 2;
      spec.angle_limit = kCurlLimit;
      break;
  }
  spec.obs_dim = 2 * spec.joints;
  spec.act_dim = spec.joints;
  return spec;
}

std::string_view to_string(EnvName name) {
  switch (name) {
    case EnvName::kPlanarReacher: return "planar-reacher";
    case EnvName::kTiltStand: return "tilt-stand";
    case EnvName::kChainCurl: return "chain-curl";
  }
  return "unknown";
}

std::optional<EnvName> parse_env_name(std::string_view text) {
  for (auto name : {EnvName::kPlanarReacher, EnvName::kTiltStand, EnvName::kChainCurl}) {
    if (to_string(name) == text) return name;
  }
  return std::nullopt;
}

double wrap_angle(double angle) {
  double wrapped = std::remainder(angle, 2.0 * std::numbers::pi);
  if (wrapped <= -std::numbers::pi) wrapped += 2.0 * std::numbers::pi;
  return wrapped;
}

namespace {

bool clipped(const EnvSpec& spec) { return spec.angle_limit < std::numbers::pi; }

}  // namespace

EnvState reset(const EnvSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  EnvState state{Eigen::VectorXd(spec.obs_dim)};
  for (int j = 0; j < spec.joints; ++j) {
    // (-pi, pi]: 1 - U[0,1) lies in (0, 1].
    double u = 1.0 - unit(rng);
    state.obs[j] = clipped(spec) ? spec.angle_limit * (2.0 * u - 1.0)
                                 : std::numbers::pi * (2.0 * u - 1.0);
  }
  for (int j = 0; j < spec.joints; ++j) state.obs[spec.joints + j] = -0.5 + unit(rng);
  return state;
}

EnvState step(const EnvSpec& spec, const EnvState& state, const Action& action) {
  if (action.act.size() != spec.act_dim) throw std::invalid_argument("action width mismatch");
  for (Eigen::Index i = 0; i < action.act.size(); ++i) {
    double a = action.act[i];
    if (!std::isfinite(a) || a < -1.0 || a > 1.0)
      throw std::invalid_argument("action entries must be finite and within [-1, 1]");
  }
  EnvState next{state.obs};
  for (int j = 0; j < spec.joints; ++j) {
    double& angle = next.obs[j];
    double& velocity = next.obs[spec.joints + j];
    velocity += spec.dt * (kTorqueGain * action.act[j] - kDamping * velocity + spec.drift);
    angle = wrap_angle(angle + spec.dt * velocity);
    if (clipped(spec) && std::abs(angle) > spec.angle_limit) {
      angle = std::copysign(spec.angle_limit, angle);
      velocity = 0.0;
    }
  }
  return next;
}

std::array<double, 2> fingertip(double shoulder, double elbow) {
  return {kReacherLink * std::cos(shoulder) + kReacherLink * std::cos(shoulder + elbow),
          kReacherLink * std::sin(shoulder) + kReacherLink * std::sin(shoulder + elbow)};
}

double oracle_reward(const EnvSpec& spec, const EnvState& state) {
  const auto& q = state.obs;
  switch (spec.name) {
    case EnvName::kPlanarReacher: {
      auto tip = fingertip(q[0], q[1]);
      return -std::hypot(tip[0] - kReacherTarget[0], tip[1] - kReacherTarget[1]);
    }
    case EnvName::kTiltStand:
      return -std::abs(q[0] - kTiltTarget);
    case EnvName::kChainCurl:
      return q[0] * q[1];
  }
  return 0.0;
}

double max_reward(const EnvSpec& spec) {
  return spec.name == EnvName::kChainCurl ? spec.angle_limit * spec.angle_limit : 0.0;
}

bool is_valid(const EnvSpec& spec, const EnvState& state) {
  if (state.obs.size() != spec.obs_dim || !state.obs.allFinite()) return false;
  for (int j = 0; j < spec.joints; ++j) {
    double q = state.obs[j];
    if (q <= -std::numbers::pi || q > std::numbers::pi) return false;
    if (clipped(spec) && std::abs(q) > spec.angle_limit) return false;
  }
  return true;
}

}  // namespace prefviz::env
