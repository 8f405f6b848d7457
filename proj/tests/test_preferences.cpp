#include <map>
#include <set>

#include <gtest/gtest.h>

#include "prefviz/preferences.hpp"
#include "test_support.hpp"

namespace prefviz::prefs {
namespace {

oracle::ClusterRanking ranking_with_sizes(const std::vector<int>& sizes) {
  oracle::ClusterRanking r;
  StateId next = 0;
  for (int s : sizes) {
    std::vector<StateId> c;
    for (int i = 0; i < s; ++i) c.push_back(next++);
    r.clusters.push_back(c);
  }
  return r;
}

TEST(Expand, TwoClusters) { EXPECT_EQ(expand_ranking(ranking_with_sizes({4, 5})).size(), 20u); }

TEST(Expand, ThreeClusterFixture) {
  auto r = ranking_with_sizes({4, 5, 6});
  EXPECT_EQ(expand_ranking(r).size(), 74u);
  EXPECT_EQ(expansion_count(r), 74);
}

TEST(Expand, LabelsFollowRanksAndNoWithinClusterPairs) {
  Rng rng = make_stream(1, 0);
  std::uniform_int_distribution<int> m_dist(2, 6), s_dist(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> sizes(static_cast<size_t>(m_dist(rng)));
    for (auto& s : sizes) s = s_dist(rng);
    auto r = ranking_with_sizes(sizes);
    std::map<StateId, size_t> rank;
    for (size_t c = 0; c < r.clusters.size(); ++c)
      for (StateId id : r.clusters[c]) rank[id] = c;

    // Every cross-cluster pair, enumerated over all ordered id pairs.
    std::set<std::pair<StateId, StateId>> expected;
    for (auto [a, ra] : rank)
      for (auto [b, rb] : rank)
        if (ra > rb) expected.insert({a, b});

    auto items = expand_ranking(r);
    std::set<std::pair<StateId, StateId>> got;
    for (const auto& c : items) {
      EXPECT_EQ(c.y, 1);
      EXPECT_GT(rank[c.s0], rank[c.s1]);
      got.insert({c.s0, c.s1});
    }
    EXPECT_EQ(got, expected);
    EXPECT_EQ(static_cast<long long>(items.size()), expansion_count(r));
  }
}

TEST(Queries, ZeroCountIsEmpty) {
  Rng rng = make_stream(2, 0);
  EXPECT_TRUE(drlhp_queries({1, 2, 3}, 0, rng).empty());
}

TEST(Queries, PairsAreDistinctAndUniform) {
  Rng rng = make_stream(3, 0);
  auto pairs = drlhp_queries({10, 11, 12, 13}, 10000, rng);
  ASSERT_EQ(pairs.size(), 10000u);
  std::map<std::pair<StateId, StateId>, long> freq;
  for (auto p : pairs) {
    ASSERT_NE(p.first, p.second);
    ++freq[p];
  }
  ASSERT_EQ(freq.size(), 12u);
  std::vector<long> counts;
  for (auto& [k, v] : freq) counts.push_back(v);
  EXPECT_LT(testing::chi2_uniform(counts), testing::chi2_critical_01(11));
}

TEST(Label, FollowsOracleAndFlipsWhenSwapped) {
  Rng rng = make_stream(4, 0);
  EXPECT_EQ(drlhp_label({1, 2}, 1.0, 0.0, rng).y, 1);
  EXPECT_EQ(drlhp_label({2, 1}, 0.0, 1.0, rng).y, 0);
  auto c = drlhp_label({1, 2}, 1.0, 0.0, rng);
  EXPECT_EQ(c.s0, 1);
  EXPECT_EQ(c.s1, 2);
}

TEST(Label, TiesAreFairCoin) {
  Rng rng = make_stream(5, 0);
  int ones = 0;
  for (int i = 0; i < 1000; ++i) ones += drlhp_label({1, 2}, 0.5, 0.5, rng).y;
  // Binomial(1000, 0.5): 4 standard deviations is about 63.
  EXPECT_NEAR(ones, 500, 63);
}

TEST(Schedule, InitialShareIsQuarter) { EXPECT_EQ(hyperbolic_schedule(100, 0.25, 4)[0], 25); }

TEST(Schedule, HandComputedFixture) {
  // 75 over weights 1/2, 1/3, 1/4: 34.6, 23.1, 17.3 floored to 34, 23, 17;
  // the leftover comparison goes to round 1.
  EXPECT_EQ(hyperbolic_schedule(100, 0.25, 3), (std::vector<int>{25, 35, 23, 17}));
}

TEST(Schedule, SumsToBudget) {
  for (int k = 1; k <= 12; ++k)
    for (int b = k; b <= 400; b += 7) {
      auto s = hyperbolic_schedule(b, 0.25, k);
      ASSERT_EQ(s.size(), static_cast<size_t>(k + 1));
      int sum = 0;
      for (int c : s) {
        EXPECT_GE(c, 0);
        sum += c;
      }
      EXPECT_EQ(sum, b) << b << " " << k;
    }
}

TEST(Clock, ChargesPerEventType) {
  HumanClock clock;
  EXPECT_EQ(clock.seconds(), 0.0);
  clock.charge(0, EventType::kComparisons, 10);
  EXPECT_DOUBLE_EQ(clock.seconds(), 30.0);
  clock.charge(1, EventType::kSimulatedRanking, 1);
  EXPECT_DOUBLE_EQ(clock.seconds(), 90.0);
  const auto& e = clock.charge(2, EventType::kLiveRanking, 1, 47.2);
  EXPECT_DOUBLE_EQ(e.seconds, 47.2);
  EXPECT_DOUBLE_EQ(clock.seconds(), 137.2);
  EXPECT_EQ(clock.log().size(), 3u);
}

TEST(Clock, EventsCsvRoundTripAndReplay) {
  HumanClock clock(TimeModel{3.0, 45.0});
  clock.charge(0, EventType::kComparisons, 7);
  clock.charge(1, EventType::kLiveRanking, 1, 12.345678901234567);
  clock.charge(2, EventType::kSimulatedRanking, 1);
  auto parsed = parse_events_csv(events_csv(clock.log()));
  ASSERT_EQ(parsed.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(parsed[i].type, clock.log()[i].type);
    EXPECT_EQ(parsed[i].seconds, clock.log()[i].seconds);
    EXPECT_EQ(parsed[i].count, clock.log()[i].count);
  }
  EXPECT_EQ(HumanClock::replay(clock.model(), parsed).seconds(), clock.seconds());
  EXPECT_EQ(parse_event_type(to_string(EventType::kLiveRanking)), EventType::kLiveRanking);
}

}  // namespace
}  // namespace prefviz::prefs
