#pragma once

// Concatenated embedding -> PCA -> exact t-SNE. Matrices in this module hold
// one point per row (N x D).

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "prefviz/common.hpp"

namespace prefviz::viz {

/// Zero mean, unit population variance per column across rows. Constant
/// columns become all zeros.
Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x);

/// Standardizes each block, then concatenates [visual | reward]. Without a
/// reward block the result is the standardized visual block alone.
Eigen::MatrixXd concat_embedding(const Eigen::MatrixXd& visual, const std::optional<Eigen::MatrixXd>& reward);

struct PcaResult {
  Eigen::MatrixXd projected;    // N x k
  Eigen::VectorXd eigenvalues;  // k, descending (covariance with 1/(N-1))
  Eigen::MatrixXd components;   // D x k, unit columns
  double total_variance = 0.0;
  int requested_k = 0;
  bool clamped = false;
};

/// Projection of mean-centred `x` onto its top-k principal axes. An
/// infeasible k is clamped to min(N - 1, D) with a warning on stderr.
/// Component signs are fixed so each column's largest-magnitude entry is
/// positive. Throws std::invalid_argument when N < 2.
PcaResult pca_reduce(const Eigen::MatrixXd& x, int k = 50);

struct TsneConfig {
  double perplexity = 30.0;
  int pca_dim = 50;
  int n_iter = 1000;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iter = 250;
  double min_gain = 0.01;
  double init_std = 1e-4;
  /// Relative tolerance on the calibrated perplexity.
  double perplexity_tolerance = 1e-5;
};

struct Affinities {
  Eigen::MatrixXd conditional;  // row i is P(j | i)
  Eigen::VectorXd beta;         // precision 1 / (2 sigma_i^2)
  Eigen::VectorXd perplexity;   // achieved 2^H(P_i)
};

/// Bandwidth search per point so that 2^H(P_i) matches `perplexity`.
Affinities calibrate_affinities(const Eigen::MatrixXd& x, double perplexity, double tolerance = 1e-5);

/// (P + P^T) / 2N.
Eigen::MatrixXd joint_probabilities(const Eigen::MatrixXd& conditional);

/// KL(P || Q) for Student-t low-dimensional affinities of `y` (N x 2).
double tsne_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y);

/// dKL/dy, N x 2.
Eigen::MatrixXd tsne_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y);

struct TsneResult {
  Eigen::MatrixXd y;                // N x 2
  std::vector<double> kl_history;   // KL(P||Q) after each iteration (unexaggerated P)
  Eigen::VectorXd perplexity;       // achieved per-point perplexity
};

/// Throws std::invalid_argument when N <= 3 * perplexity.
TsneResult tsne(const Eigen::MatrixXd& x, const TsneConfig& config, Rng& rng);

/// PCA to config.pca_dim followed by t-SNE.
TsneResult embed_2d(const Eigen::MatrixXd& x, const TsneConfig& config, Rng& rng);

struct SnapshotPoint {
  StateId id = 0;
  double x = 0.0;
  double y = 0.0;
};

/// What the labeller sees for one iteration.
struct EmbeddingSnapshot {
  int iteration = 0;
  std::vector<SnapshotPoint> points;
  std::string thumbnail_url_template = "/state/{id}/thumbnail";

  std::vector<StateId> ids() const;
  Eigen::MatrixXd coords() const;
};

EmbeddingSnapshot make_snapshot(int iteration, const std::vector<StateId>& ids, const Eigen::MatrixXd& coords);

nlohmann::json to_json(const EmbeddingSnapshot& snapshot);
EmbeddingSnapshot snapshot_from_json(const nlohmann::json& j);

}  // namespace prefviz::viz
