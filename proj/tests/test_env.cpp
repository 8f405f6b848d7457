#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "prefviz/env.hpp"
#include "test_support.hpp"

namespace prefviz::env {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(Env, SpecDimensions) {
  auto reacher = make_spec(EnvName::kPlanarReacher);
  EXPECT_EQ(reacher.obs_dim, 4);
  EXPECT_EQ(reacher.act_dim, 2);
  EXPECT_EQ(reacher.episode_len, 50);
  auto tilt = make_spec(EnvName::kTiltStand);
  EXPECT_EQ(tilt.obs_dim, 2);
  EXPECT_EQ(tilt.act_dim, 1);
  auto curl = make_spec(EnvName::kChainCurl);
  EXPECT_EQ(curl.obs_dim, 4);
  EXPECT_EQ(curl.act_dim, 2);
}

TEST(Env, NamesRoundTrip) {
  for (auto name : {EnvName::kPlanarReacher, EnvName::kTiltStand, EnvName::kChainCurl})
    EXPECT_EQ(parse_env_name(to_string(name)), name);
  EXPECT_FALSE(parse_env_name("half-cheetah").has_value());
}

TEST(Env, ResetIsDeterministicPerSeed) {
  for (auto name : {EnvName::kPlanarReacher, EnvName::kTiltStand, EnvName::kChainCurl}) {
    auto spec = make_spec(name);
    Rng a = make_stream(7, 0);
    Rng b = make_stream(7, 0);
    EXPECT_EQ(reset(spec, a).obs, reset(spec, b).obs);
  }
}

TEST(Env, ResetAnglesUniformOverEightBins) {
  auto spec = make_spec(EnvName::kPlanarReacher);
  Rng rng = make_stream(11, 0);
  std::vector<long> first(8, 0);
  std::vector<long> second(8, 0);
  for (int i = 0; i < 10000; ++i) {
    auto s = reset(spec, rng);
    ASSERT_GT(s.obs[0], -kPi);
    ASSERT_LE(s.obs[0], kPi);
    auto bin = [](double q) { return std::min(7, static_cast<int>((q + kPi) / (2.0 * kPi) * 8.0)); };
    ++first[static_cast<size_t>(bin(s.obs[0]))];
    ++second[static_cast<size_t>(bin(s.obs[1]))];
  }
  EXPECT_LT(testing::chi2_uniform(first), testing::chi2_critical_01(7));
  EXPECT_LT(testing::chi2_uniform(second), testing::chi2_critical_01(7));
}

TEST(Env, ChainCurlResetsWithinClipRange) {
  auto spec = make_spec(EnvName::kChainCurl);
  Rng rng = make_stream(3, 0);
  for (int i = 0; i < 1000; ++i) {
    auto s = reset(spec, rng);
    EXPECT_LE(std::abs(s.obs[0]), kCurlLimit);
    EXPECT_LE(std::abs(s.obs[1]), kCurlLimit);
    EXPECT_TRUE(is_valid(spec, s));
  }
}

TEST(Env, ZeroActionAtRestIsFixedPoint) {
  for (auto name : {EnvName::kPlanarReacher, EnvName::kChainCurl}) {
    auto spec = make_spec(name);
    EnvState s{Eigen::VectorXd::Zero(spec.obs_dim)};
    s.obs[0] = 0.4;
    auto next = step(spec, s, Action{Eigen::VectorXd::Zero(spec.act_dim)});
    EXPECT_EQ(next.obs, s.obs);
  }
}

TEST(Env, TiltStandForceBalanceHoldsAngle) {
  auto spec = make_spec(EnvName::kTiltStand);
  EnvState s{Eigen::Vector2d(0.3, 0.0)};
  Action balance{Eigen::VectorXd::Constant(1, -spec.drift / kTorqueGain)};
  for (int t = 0; t < 50; ++t) s = step(spec, s, balance);
  EXPECT_NEAR(s.obs[0], 0.3, 1e-12);
  EXPECT_NEAR(s.obs[1], 0.0, 1e-12);
}

TEST(Env, MaxTorqueMatchesScalarIntegrator) {
  auto spec = make_spec(EnvName::kTiltStand);
  EnvState s{Eigen::Vector2d(0.0, 0.0)};
  double theta = 0.0;
  double omega = 0.0;
  for (int t = 0; t < 50; ++t) {
    s = step(spec, s, Action{Eigen::VectorXd::Constant(1, 1.0)});
    omega = omega + 0.05 * (8.0 * 1.0 - 1.0 * omega - 0.5);
    theta = theta + 0.05 * omega;
    theta = std::atan2(std::sin(theta), std::cos(theta));
    EXPECT_NEAR(s.obs[1], omega, 1e-9);
    EXPECT_NEAR(std::cos(s.obs[0]), std::cos(theta), 1e-9);
    EXPECT_NEAR(std::sin(s.obs[0]), std::sin(theta), 1e-9);
  }
}

TEST(Env, AnglesStayWrapped) {
  auto spec = make_spec(EnvName::kPlanarReacher);
  EnvState s{Eigen::Vector4d(3.0, -3.0, 0.0, 0.0)};
  for (int t = 0; t < 200; ++t) {
    s = step(spec, s, Action{Eigen::Vector2d(1.0, -1.0)});
    ASSERT_GT(s.obs[0], -kPi);
    ASSERT_LE(s.obs[0], kPi);
    ASSERT_GT(s.obs[1], -kPi);
    ASSERT_LE(s.obs[1], kPi);
  }
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_NEAR(wrap_angle(3.0 * kPi / 2.0), -kPi / 2.0, 1e-15);
}

TEST(Env, ChainCurlClipsAndStops) {
  auto spec = make_spec(EnvName::kChainCurl);
  EnvState s{Eigen::Vector4d(kCurlLimit - 0.01, 0.0, 2.0, 0.0)};
  s = step(spec, s, Action{Eigen::Vector2d(1.0, 0.0)});
  EXPECT_DOUBLE_EQ(s.obs[0], kCurlLimit);
  EXPECT_DOUBLE_EQ(s.obs[2], 0.0);
}

TEST(Env, StepRejectsBadActions) {
  auto spec = make_spec(EnvName::kPlanarReacher);
  EnvState s{Eigen::VectorXd::Zero(4)};
  EXPECT_THROW(step(spec, s, Action{Eigen::VectorXd::Zero(1)}), std::invalid_argument);
  EXPECT_THROW(step(spec, s, Action{Eigen::Vector2d(1.5, 0.0)}), std::invalid_argument);
  EXPECT_THROW(step(spec, s, Action{Eigen::Vector2d(std::nan(""), 0.0)}), std::invalid_argument);
}

TEST(Env, TiltStandRewards) {
  auto spec = make_spec(EnvName::kTiltStand);
  EXPECT_DOUBLE_EQ(oracle_reward(spec, EnvState{Eigen::Vector2d(1.25, 0.0)}), 0.0);
  EXPECT_DOUBLE_EQ(oracle_reward(spec, EnvState{Eigen::Vector2d(0.0, 0.0)}), -1.25);
}

TEST(Env, ChainCurlRewards) {
  auto spec = make_spec(EnvName::kChainCurl);
  EXPECT_DOUBLE_EQ(oracle_reward(spec, EnvState{Eigen::Vector4d(1.0, 1.0, 0.0, 0.0)}), 1.0);
  EXPECT_DOUBLE_EQ(oracle_reward(spec, EnvState{Eigen::Vector4d(1.0, -1.0, 0.0, 0.0)}), -1.0);
}

TEST(Env, ReacherRewardIsFingertipDistance) {
  auto spec = make_spec(EnvName::kPlanarReacher);
  // Arm folded onto the target: shoulder at -3pi/4 with a straight elbow
  // reaches (-0.1414, -0.1414); the target is at (-0.1, -0.1).
  EnvState s{Eigen::Vector4d(-3.0 * kPi / 4.0, 0.0, 0.0, 0.0)};
  double expected = -(2.0 * 0.1 - 0.1 * std::sqrt(2.0));
  EXPECT_NEAR(oracle_reward(spec, s), expected, 1e-12);
  auto tip = fingertip(0.0, kPi / 2.0);
  EXPECT_NEAR(tip[0], 0.1, 1e-15);
  EXPECT_NEAR(tip[1], 0.1, 1e-15);
}

TEST(Env, RewardBoundedByMax) {
  Rng rng = make_stream(5, 0);
  for (auto name : {EnvName::kPlanarReacher, EnvName::kTiltStand, EnvName::kChainCurl}) {
    auto spec = make_spec(name);
    for (int i = 0; i < 500; ++i) EXPECT_LE(oracle_reward(spec, reset(spec, rng)), max_reward(spec) + 1e-12);
  }
}

}  // namespace
}  // namespace prefviz::env
