#pragma once

// Simulated CLRVis labeller. It clusters the 2-D map (Ward linkage), drops
// small and high-variance candidates, picks M clusters whose mean oracle
// rewards are closest to M equally spaced targets, and ranks them by mean
// oracle reward. Rankings are ascending: clusters.front() is judged worst.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "prefviz/common.hpp"

namespace prefviz::oracle {

enum class FeedbackSource { kSimulated, kLive };

std::string_view to_string(FeedbackSource source);
std::optional<FeedbackSource> parse_feedback_source(std::string_view text);

struct ClusterRanking {
  std::vector<std::vector<StateId>> clusters;
  FeedbackSource source = FeedbackSource::kSimulated;
  int iteration = 0;

  bool operator==(const ClusterRanking&) const = default;
};

/// Shared wire shape: {"clusters": [[id...]...], "source": "...", "iteration": i}.
nlohmann::json to_json(const ClusterRanking& ranking);
ClusterRanking ranking_from_json(const nlohmann::json& j);

/// Reason a ranking is unacceptable for a snapshot, or nullopt if valid.
/// Reasons: "too few clusters", "empty cluster", "unknown id", "overlap".
std::optional<std::string> validate(const ClusterRanking& ranking, const std::vector<StateId>& snapshot_ids);

struct OracleConfig {
  int clusters_to_rank = 5;          // M
  int candidate_clusters = 30;       // K
  double min_size_frac = 0.01;
  double variance_quantile = 0.75;
  double quantile_relax_step = 0.05;
};

/// Point-index groups.
using Clusters = std::vector<std::vector<int>>;

/// Greedy Ward agglomeration of the rows of `coords` (N x 2) down to `k`
/// clusters. Merge order minimizes (cost, lower slot, higher slot)
/// lexicographically; a merged cluster keeps the lower slot. Output clusters
/// are listed by slot and each lists its points in ascending order.
Clusters agglomerate(const Eigen::MatrixXd& coords, int k);

/// Ward cost of merging two groups: |A||B| / (|A| + |B|) * |c_A - c_B|^2.
double ward_cost(const Eigen::MatrixXd& coords, const std::vector<int>& a, const std::vector<int>& b);

struct FilterResult {
  Clusters survivors;
  double quantile_used = 0.0;
};

/// Drops clusters smaller than min_size_frac * n_points, then keeps the
/// lowest-variance ceil(q * n) of the rest (ties by index), relaxing q in
/// steps until at least `needed` survive. Throws std::runtime_error when the
/// size filter alone leaves fewer than `needed`.
FilterResult filter_candidates(const Clusters& clusters, const Eigen::VectorXd& rewards, int n_points,
                               const OracleConfig& config, int needed);

/// Mean reward of each cluster.
std::vector<double> cluster_means(const Clusters& clusters, const Eigen::VectorXd& rewards);

/// Indices into `means` picked for equally spaced targets over
/// [min, max], nearest unused mean first (ties -> lower index), returned in
/// ascending order of mean.
std::vector<int> select_targets(const std::vector<double>& means, int m);

/// select_targets over survivors, ids mapped through `ids`.
ClusterRanking select_and_rank(const Clusters& survivors, const Eigen::VectorXd& rewards,
                               const std::vector<StateId>& ids, int m);

/// Full simulated labeller for one snapshot.
ClusterRanking simulate_ranking(const Eigen::MatrixXd& coords, const Eigen::VectorXd& rewards,
                                const std::vector<StateId>& ids, const OracleConfig& config, int iteration);

}  // namespace prefviz::oracle
