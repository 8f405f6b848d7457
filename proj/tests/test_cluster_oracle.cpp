#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "prefviz/cluster_oracle.hpp"
#include "test_support.hpp"

namespace prefviz::oracle {
namespace {

Eigen::MatrixXd uniform_points(int n, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(n, 2);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Recomputes every pairwise Ward cost from raw members at each merge.
Clusters brute_ward(const Eigen::MatrixXd& coords, int k) {
  std::vector<std::vector<int>> slots(static_cast<size_t>(coords.rows()));
  for (int i = 0; i < coords.rows(); ++i) slots[static_cast<size_t>(i)] = {i};
  auto centroid = [&](const std::vector<int>& g) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (int i : g) c += coords.row(i).transpose();
    return Eigen::Vector2d(c / static_cast<double>(g.size()));
  };
  int alive = static_cast<int>(coords.rows());
  while (alive > k) {
    double best = INFINITY;
    size_t ba = 0, bb = 0;
    for (size_t a = 0; a < slots.size(); ++a) {
      if (slots[a].empty()) continue;
      for (size_t b = a + 1; b < slots.size(); ++b) {
        if (slots[b].empty()) continue;
        double na = static_cast<double>(slots[a].size()), nb = static_cast<double>(slots[b].size());
        double cost = na * nb / (na + nb) * (centroid(slots[a]) - centroid(slots[b])).squaredNorm();
        if (cost < best) best = cost, ba = a, bb = b;
      }
    }
    slots[ba].insert(slots[ba].end(), slots[bb].begin(), slots[bb].end());
    std::sort(slots[ba].begin(), slots[ba].end());
    slots[bb].clear();
    --alive;
  }
  Clusters out;
  for (auto& s : slots)
    if (!s.empty()) out.push_back(s);
  return out;
}

TEST(Agglomerate, KEqualsNGivesSingletons) {
  Rng rng = make_stream(1, 0);
  auto clusters = agglomerate(uniform_points(7, rng), 7);
  ASSERT_EQ(clusters.size(), 7u);
  for (int i = 0; i < 7; ++i) EXPECT_EQ(clusters[static_cast<size_t>(i)], std::vector<int>{i});
}

TEST(Agglomerate, SeparatedPairs) {
  Eigen::MatrixXd coords(4, 2);
  coords << 0, 0, 100, 100, 0.1, 0, 100, 100.2;
  EXPECT_EQ(agglomerate(coords, 2), (Clusters{{0, 2}, {1, 3}}));
}

TEST(Agglomerate, BlobsRecoveredExactly) {
  Rng rng = make_stream(2, 0);
  Eigen::MatrixXd coords(60, 2);
  std::normal_distribution<double> n(0.0, 1.0);
  const double centres[3][2] = {{0, 0}, {50, 0}, {0, 50}};
  for (int i = 0; i < 60; ++i) {
    coords(i, 0) = centres[i % 3][0] + n(rng);
    coords(i, 1) = centres[i % 3][1] + n(rng);
  }
  auto clusters = agglomerate(coords, 3);
  ASSERT_EQ(clusters.size(), 3u);
  for (const auto& c : clusters) {
    ASSERT_EQ(c.size(), 20u);
    for (int i : c) EXPECT_EQ(i % 3, c.front() % 3);
  }
}

TEST(Agglomerate, MatchesBruteForceWardAtTinyN) {
  Rng rng = make_stream(3, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + trial % 10;
    auto coords = uniform_points(n, rng);
    for (int k = 1; k <= n; ++k) ASSERT_EQ(agglomerate(coords, k), brute_ward(coords, k)) << n << " " << k;
  }
}

TEST(Agglomerate, WardCostFormula) {
  Eigen::MatrixXd coords(3, 2);
  coords << 0, 0, 2, 0, 0, 3;
  EXPECT_NEAR(ward_cost(coords, {0, 1}, {2}), 2.0 / 3.0 * (1.0 + 9.0), 1e-12);
}

TEST(Filter, EqualCandidatesDropTopQuartileCount) {
  Clusters clusters;
  for (int i = 0; i < 30; ++i) clusters.push_back({2 * i, 2 * i + 1});
  Eigen::VectorXd rewards(60);
  for (int i = 0; i < 60; ++i) rewards[i] = i % 2;
  auto r = filter_candidates(clusters, rewards, 60, OracleConfig{}, 5);
  EXPECT_EQ(r.survivors.size(), 30u - 7u);
  // Ties resolve by index, so the first 23 survive.
  for (int i = 0; i < 23; ++i) EXPECT_EQ(r.survivors[static_cast<size_t>(i)], clusters[static_cast<size_t>(i)]);
}

TEST(Filter, SmallClusterDropped) {
  Clusters clusters{{0}};
  std::vector<int> rest;
  for (int i = 1; i < 500; ++i) rest.push_back(i);
  for (int c = 0; c < 6; ++c) clusters.push_back(std::vector<int>(rest.begin() + c * 80, rest.begin() + (c + 1) * 80));
  Eigen::VectorXd rewards = Eigen::VectorXd::Zero(500);
  OracleConfig config;
  config.variance_quantile = 1.0;
  auto r = filter_candidates(clusters, rewards, 500, config, 5);
  EXPECT_EQ(r.survivors.size(), 6u);
  for (const auto& s : r.survivors) EXPECT_GT(s.size(), 1u);
}

TEST(Filter, HandBuiltVarianceFixture) {
  // Variances: c0 0, c1 1, c2 0.25, c3 4, c4 0.0625 (size 2 each).
  Clusters clusters{{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}};
  Eigen::VectorXd rewards(10);
  rewards << 0, 0, -1, 1, -0.5, 0.5, -2, 2, -0.25, 0.25;
  OracleConfig config;
  config.min_size_frac = 0.0;
  config.variance_quantile = 0.6;
  auto r = filter_candidates(clusters, rewards, 10, config, 2);
  // ceil(0.6 * 5) = 3 lowest: c0, c2, c4 in index order.
  EXPECT_EQ(r.survivors, (Clusters{{0, 1}, {4, 5}, {8, 9}}));
  EXPECT_DOUBLE_EQ(r.quantile_used, 0.6);
}

TEST(Filter, RelaxesQuantileThenFailsOnSizeAlone) {
  Clusters clusters{{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  Eigen::VectorXd rewards(8);
  rewards << 0, 1, 0, 2, 0, 3, 0, 4;
  OracleConfig config;
  config.min_size_frac = 0.0;
  config.variance_quantile = 0.5;
  auto r = filter_candidates(clusters, rewards, 8, config, 4);
  EXPECT_EQ(r.survivors.size(), 4u);
  EXPECT_GT(r.quantile_used, 0.5);

  config.min_size_frac = 0.5;
  EXPECT_THROW(filter_candidates(clusters, rewards, 8, config, 2), std::runtime_error);
}

Clusters singletons(int n) {
  Clusters c;
  for (int i = 0; i < n; ++i) c.push_back({i});
  return c;
}

TEST(Select, ExactTargetHits) {
  EXPECT_EQ(select_targets({0, 1, 2, 3, 4}, 3), (std::vector<int>{0, 2, 4}));
  EXPECT_EQ(select_targets({3, 0, 4, 1, 2}, 3), (std::vector<int>{1, 4, 2}));
}

TEST(Select, TwoPicksAreExtremes) {
  Rng rng = make_stream(4, 0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> means(8);
    for (auto& m : means) m = n(rng);
    auto picked = select_targets(means, 2);
    int lo = static_cast<int>(std::min_element(means.begin(), means.end()) - means.begin());
    int hi = static_cast<int>(std::max_element(means.begin(), means.end()) - means.begin());
    EXPECT_EQ(picked, (std::vector<int>{lo, hi}));
  }
}

TEST(Select, MatchesSequentialNearestUnusedOracle) {
  Rng rng = make_stream(5, 0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> means(10);
    for (auto& m : means) m = n(rng);
    const double lo = *std::min_element(means.begin(), means.end());
    const double hi = *std::max_element(means.begin(), means.end());
    std::vector<int> expected;
    std::vector<bool> used(means.size(), false);
    for (int t = 0; t < 4; ++t) {
      double target = lo + (hi - lo) * t / 3.0;
      int best = -1;
      for (int i = 0; i < 10; ++i)
        if (!used[static_cast<size_t>(i)] &&
            (best < 0 || std::abs(means[static_cast<size_t>(i)] - target) < std::abs(means[static_cast<size_t>(best)] - target)))
          best = i;
      used[static_cast<size_t>(best)] = true;
      expected.push_back(best);
    }
    std::sort(expected.begin(), expected.end(),
              [&](int a, int b) { return means[static_cast<size_t>(a)] < means[static_cast<size_t>(b)]; });
    EXPECT_EQ(select_targets(means, 4), expected);
  }
}

TEST(Select, RankingMapsIdsAndAscends) {
  Clusters survivors{{0, 1}, {2}, {3, 4}};
  Eigen::VectorXd rewards(5);
  rewards << 5, 7, -1, 2, 2;
  auto r = select_and_rank(survivors, rewards, {100, 101, 102, 103, 104}, 3);
  EXPECT_EQ(r.clusters, (std::vector<std::vector<StateId>>{{102}, {103, 104}, {100, 101}}));
}

/// Fraction of induced cross-cluster pairs whose label contradicts the state rewards.
double mislabel_rate(const ClusterRanking& ranking, const std::vector<StateId>& ids, const Eigen::VectorXd& rewards) {
  auto reward_of = [&](StateId id) {
    return rewards[std::find(ids.begin(), ids.end(), id) - ids.begin()];
  };
  long wrong = 0, total = 0;
  for (size_t i = 0; i < ranking.clusters.size(); ++i)
    for (size_t j = i + 1; j < ranking.clusters.size(); ++j)
      for (StateId lo : ranking.clusters[i])
        for (StateId hi : ranking.clusters[j]) {
          ++total;
          if (reward_of(hi) < reward_of(lo)) ++wrong;
        }
  return static_cast<double>(wrong) / static_cast<double>(total);
}

TEST(Simulated, OverlappingRewardsInduceMislabels) {
  Rng rng = make_stream(6, 0);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd coords(100, 2);
  Eigen::VectorXd rewards(100);
  std::vector<StateId> ids;
  for (int i = 0; i < 100; ++i) {
    int blob = i / 20;
    coords(i, 0) = 40.0 * blob + n(rng);
    coords(i, 1) = n(rng);
    rewards[i] = 0.5 * blob + n(rng);
    ids.push_back(1000 + i);
  }
  OracleConfig config;
  config.candidate_clusters = 5;
  config.variance_quantile = 1.0;
  auto ranking = simulate_ranking(coords, rewards, ids, config, 0);
  EXPECT_FALSE(validate(ranking, ids).has_value());
  EXPECT_GT(mislabel_rate(ranking, ids, rewards), 0.0);

  for (int i = 0; i < 100; ++i) rewards[i] = 10.0 * (i / 20) + std::abs(n(rng)) * 0.1;
  auto clean = simulate_ranking(coords, rewards, ids, config, 0);
  EXPECT_EQ(mislabel_rate(clean, ids, rewards), 0.0);
}

TEST(Simulated, DefaultsOnRandomMapGiveValidRanking) {
  Rng rng = make_stream(7, 0);
  auto coords = uniform_points(500, rng, -30, 30);
  Eigen::VectorXd rewards(500);
  for (int i = 0; i < 500; ++i) rewards[i] = coords(i, 0) + 0.1 * coords(i, 1);
  std::vector<StateId> ids(500);
  for (int i = 0; i < 500; ++i) ids[static_cast<size_t>(i)] = i;
  auto ranking = simulate_ranking(coords, rewards, ids, OracleConfig{}, 3);
  EXPECT_EQ(ranking.clusters.size(), 5u);
  EXPECT_EQ(ranking.iteration, 3);
  EXPECT_FALSE(validate(ranking, ids).has_value());
  std::vector<double> means;
  for (const auto& c : ranking.clusters) {
    double s = 0.0;
    for (StateId id : c) s += rewards[id];
    means.push_back(s / static_cast<double>(c.size()));
  }
  EXPECT_TRUE(std::is_sorted(means.begin(), means.end()));
}

TEST(Validate, Reasons) {
  std::vector<StateId> ids{1, 2, 3, 4};
  ClusterRanking r;
  r.clusters = {{1}};
  EXPECT_EQ(validate(r, ids), "too few clusters");
  r.clusters = {{1}, {}};
  EXPECT_EQ(validate(r, ids), "empty cluster");
  r.clusters = {{1}, {9}};
  EXPECT_EQ(validate(r, ids), "unknown id");
  r.clusters = {{1, 2}, {2}};
  EXPECT_EQ(validate(r, ids), "overlap");
  r.clusters = {{1, 2}, {4}};
  EXPECT_FALSE(validate(r, ids).has_value());
}

TEST(Wire, JsonRoundTrip) {
  ClusterRanking r{{{5, 6}, {-1}}, FeedbackSource::kLive, 2};
  auto j = to_json(r);
  EXPECT_EQ(j.at("source"), "live");
  EXPECT_EQ(ranking_from_json(nlohmann::json::parse(j.dump())), r);
  EXPECT_EQ(parse_feedback_source("simulated"), FeedbackSource::kSimulated);
  EXPECT_FALSE(parse_feedback_source("robot").has_value());
}

}  // namespace
}  // namespace prefviz::oracle
