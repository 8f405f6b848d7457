#include "prefviz/cluster_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace prefviz::oracle {

std::string_view to_string(FeedbackSource source) {
  return source == FeedbackSource::kSimulated ? "simulated" : "live";
}

std::optional<FeedbackSource> parse_feedback_source(std::string_view text) {
  if (text == "simulated") return FeedbackSource::kSimulated;
  if (text == "live") return FeedbackSource::kLive;
  return std::nullopt;
}

nlohmann::json to_json(const ClusterRanking& ranking) {
  return {{"clusters", ranking.clusters}, {"source", to_string(ranking.source)}, {"iteration", ranking.iteration}};
}

ClusterRanking ranking_from_json(const nlohmann::json& j) {
  ClusterRanking r;
  r.clusters = j.at("clusters").get<std::vector<std::vector<StateId>>>();
  auto source = parse_feedback_source(j.value("source", std::string("live")));
  if (!source) throw std::invalid_argument("unknown ranking source");
  r.source = *source;
  r.iteration = j.value("iteration", 0);
  return r;
}

std::optional<std::string> validate(const ClusterRanking& ranking, const std::vector<StateId>& snapshot_ids) {
  if (ranking.clusters.size() < 2) return "too few clusters";
  std::unordered_set<StateId> known(snapshot_ids.begin(), snapshot_ids.end());
  std::unordered_set<StateId> seen;
  for (const auto& cluster : ranking.clusters) {
    if (cluster.empty()) return "empty cluster";
    for (StateId id : cluster) {
      if (!known.contains(id)) return "unknown id";
      if (!seen.insert(id).second) return "overlap";
    }
  }
  return std::nullopt;
}

double ward_cost(const Eigen::MatrixXd& coords, const std::vector<int>& a, const std::vector<int>& b) {
  Eigen::RowVectorXd ca = Eigen::RowVectorXd::Zero(coords.cols());
  Eigen::RowVectorXd cb = Eigen::RowVectorXd::Zero(coords.cols());
  for (int i : a) ca += coords.row(i);
  for (int i : b) cb += coords.row(i);
  double na = static_cast<double>(a.size());
  double nb = static_cast<double>(b.size());
  ca /= na;
  cb /= nb;
  return na * nb / (na + nb) * (ca - cb).squaredNorm();
}

Clusters agglomerate(const Eigen::MatrixXd& coords, int k) {
  const int n = static_cast<int>(coords.rows());
  if (k <= 0 || k > n) throw std::invalid_argument("cluster count must be within [1, N]");

  std::vector<Eigen::Vector2d> centroid(n);
  std::vector<double> size(n, 1.0);
  std::vector<bool> active(n, true);
  std::vector<std::vector<int>> members(n);
  for (int i = 0; i < n; ++i) {
    centroid[i] = coords.row(i).head<2>().transpose();
    members[i] = {i};
  }
  auto cost = [&](int a, int b) {
    return size[a] * size[b] / (size[a] + size[b]) * (centroid[a] - centroid[b]).squaredNorm();
  };

  // best[i]: cheapest partner j > i.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> best_cost(n, kInf);
  std::vector<int> best_j(n, -1);
  auto refresh = [&](int i) {
    best_cost[i] = kInf;
    best_j[i] = -1;
    for (int j = i + 1; j < n; ++j) {
      if (!active[j]) continue;
      double c = cost(i, j);
      if (c < best_cost[i]) {
        best_cost[i] = c;
        best_j[i] = j;
      }
    }
  };
  for (int i = 0; i < n; ++i) refresh(i);

  for (int remaining = n; remaining > k; --remaining) {
    int a = -1;
    for (int i = 0; i < n; ++i) {
      if (!active[i] || best_j[i] < 0) continue;
      if (a < 0 || best_cost[i] < best_cost[a]) a = i;  // strict: keeps the lower slot on ties
    }
    int b = best_j[a];
    centroid[a] = (size[a] * centroid[a] + size[b] * centroid[b]) / (size[a] + size[b]);
    size[a] += size[b];
    members[a].insert(members[a].end(), members[b].begin(), members[b].end());
    members[b].clear();
    active[b] = false;

    refresh(a);
    for (int i = 0; i < n; ++i) {
      if (!active[i] || i == a) continue;
      if (best_j[i] == a || best_j[i] == b) {
        refresh(i);
      } else if (i < a) {
        double c = cost(i, a);
        if (c < best_cost[i] || (c == best_cost[i] && a < best_j[i])) {
          best_cost[i] = c;
          best_j[i] = a;
        }
      }
    }
  }

  Clusters out;
  for (int i = 0; i < n; ++i) {
    if (!active[i]) continue;
    std::sort(members[i].begin(), members[i].end());
    out.push_back(std::move(members[i]));
  }
  return out;
}

std::vector<double> cluster_means(const Clusters& clusters, const Eigen::VectorXd& rewards) {
  std::vector<double> means;
  means.reserve(clusters.size());
  for (const auto& c : clusters) {
    double sum = 0.0;
    for (int i : c) sum += rewards[i];
    means.push_back(sum / static_cast<double>(c.size()));
  }
  return means;
}

namespace {

double variance_of(const std::vector<int>& cluster, const Eigen::VectorXd& rewards) {
  double mean = 0.0;
  for (int i : cluster) mean += rewards[i];
  mean /= static_cast<double>(cluster.size());
  double var = 0.0;
  for (int i : cluster) var += (rewards[i] - mean) * (rewards[i] - mean);
  return var / static_cast<double>(cluster.size());
}

}  // namespace

FilterResult filter_candidates(const Clusters& clusters, const Eigen::VectorXd& rewards, int n_points,
                               const OracleConfig& config, int needed) {
  const double min_size = config.min_size_frac * n_points;
  Clusters sized;
  for (const auto& c : clusters)
    if (static_cast<double>(c.size()) >= min_size) sized.push_back(c);
  if (static_cast<int>(sized.size()) < needed)
    throw std::runtime_error("too few clusters survive the size filter");

  std::vector<double> variance;
  for (const auto& c : sized) variance.push_back(variance_of(c, rewards));
  std::vector<int> order(sized.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return variance[x] < variance[y]; });

  const int n = static_cast<int>(sized.size());
  double q = config.variance_quantile;
  int keep = 0;
  while (true) {
    int drop = q >= 1.0 ? 0 : static_cast<int>(std::floor(n * (1.0 - q) + 1e-9));
    keep = n - drop;
    if (keep >= needed) break;
    q += config.quantile_relax_step;
  }
  std::vector<int> kept(order.begin(), order.begin() + keep);
  std::sort(kept.begin(), kept.end());
  FilterResult result;
  result.quantile_used = q;
  for (int idx : kept) result.survivors.push_back(sized[idx]);
  return result;
}

std::vector<int> select_targets(const std::vector<double>& means, int m) {
  if (m < 1 || m > static_cast<int>(means.size())) throw std::invalid_argument("cannot select that many clusters");
  auto [lo_it, hi_it] = std::minmax_element(means.begin(), means.end());
  double lo = *lo_it;
  double hi = *hi_it;
  std::vector<bool> used(means.size(), false);
  std::vector<int> picked;
  for (int t = 0; t < m; ++t) {
    double target = m == 1 ? lo : lo + (hi - lo) * t / (m - 1);
    int best = -1;
    for (size_t i = 0; i < means.size(); ++i) {
      if (used[i]) continue;
      if (best < 0 || std::abs(means[i] - target) < std::abs(means[best] - target)) best = static_cast<int>(i);
    }
    used[best] = true;
    picked.push_back(best);
  }
  std::stable_sort(picked.begin(), picked.end(), [&](int a, int b) { return means[a] < means[b]; });
  return picked;
}

ClusterRanking select_and_rank(const Clusters& survivors, const Eigen::VectorXd& rewards,
                               const std::vector<StateId>& ids, int m) {
  auto picked = select_targets(cluster_means(survivors, rewards), m);
  ClusterRanking ranking;
  for (int idx : picked) {
    std::vector<StateId> cluster;
    for (int point : survivors[idx]) cluster.push_back(ids[point]);
    ranking.clusters.push_back(std::move(cluster));
  }
  return ranking;
}

ClusterRanking simulate_ranking(const Eigen::MatrixXd& coords, const Eigen::VectorXd& rewards,
                                const std::vector<StateId>& ids, const OracleConfig& config, int iteration) {
  const int n = static_cast<int>(coords.rows());
  auto candidates = agglomerate(coords, std::min(config.candidate_clusters, n));
  auto filtered = filter_candidates(candidates, rewards, n, config, config.clusters_to_rank);
  auto ranking = select_and_rank(filtered.survivors, rewards, ids, config.clusters_to_rank);
  ranking.source = FeedbackSource::kSimulated;
  ranking.iteration = iteration;
  return ranking;
}

}  // namespace prefviz::oracle
