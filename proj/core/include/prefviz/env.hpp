#pragma once

// Analytic fixed-length control tasks with hidden ground-truth rewards.
//
// Each task is a chain of actuated joints following damped double-integrator
// dynamics:
//
//   w' = w + dt * (kTorqueGain * a - kDamping * w + drift)
//   q' = wrap(q + dt * w')
//
// The observation is [q_1..q_n, w_1..w_n]. Episodes always run for exactly
// `episode_len` steps; there are no termination conditions.

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "prefviz/common.hpp"

namespace prefviz::env {

enum class EnvName { kPlanarReacher, kTiltStand, kChainCurl };

inline constexpr double kTorqueGain = 8.0;
inline constexpr double kDamping = 1.0;
inline constexpr double kDt = 0.05;
inline constexpr int kEpisodeLen = 50;
inline constexpr double kTiltDrift = -0.5;
inline constexpr double kTiltTarget = 1.25;
inline constexpr double kReacherLink = 0.1;
inline constexpr std::array<double, 2> kReacherTarget{-0.1, -0.1};
/// Rotor angle bound for chain-curl.
inline constexpr double kCurlLimit = 2.0 * 3.14159265358979323846 / 3.0;

struct EnvSpec {
  EnvName name = EnvName::kPlanarReacher;
  int joints = 2;
  int obs_dim = 4;
  int act_dim = 2;
  int episode_len = kEpisodeLen;
  double dt = kDt;
  double drift = 0.0;
  /// Angle bound; joints are clipped to [-limit, limit] when < pi.
  double angle_limit = 3.14159265358979323846;
};

EnvSpec make_spec(EnvName name);
std::string_view to_string(EnvName name);
std::optional<EnvName> parse_env_name(std::string_view text);

struct EnvState {
  Eigen::VectorXd obs;
};

struct Action {
  Eigen::VectorXd act;
};

/// Wraps to (-pi, pi].
double wrap_angle(double angle);

/// Angles uniform on (-pi, pi] (or the clip range), velocities uniform on
/// [-0.5, 0.5].
EnvState reset(const EnvSpec& spec, Rng& rng);

/// Throws std::invalid_argument on wrong width, non-finite or out-of-range
/// action entries.
EnvState step(const EnvSpec& spec, const EnvState& state, const Action& action);

/// Hidden task reward of a single state. Pure.
double oracle_reward(const EnvSpec& spec, const EnvState& state);

/// Supremum of oracle_reward over valid states.
double max_reward(const EnvSpec& spec);

/// Planar two-link forward kinematics.
std::array<double, 2> fingertip(double shoulder, double elbow);

bool is_valid(const EnvSpec& spec, const EnvState& state);

}  // namespace prefviz::env
