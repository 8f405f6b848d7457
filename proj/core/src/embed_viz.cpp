#include "prefviz/embed_viz.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace prefviz::viz {

Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x;
  const auto n = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double mean = x.col(c).mean();
    double var = (x.col(c).array() - mean).square().sum() / n;
    if (var <= 1e-24) {
      out.col(c).setZero();
    } else {
      out.col(c) = (x.col(c).array() - mean) / std::sqrt(var);
    }
  }
  return out;
}

Eigen::MatrixXd concat_embedding(const Eigen::MatrixXd& visual, const std::optional<Eigen::MatrixXd>& reward) {
  if (!reward) return standardize_columns(visual);
  if (reward->rows() != visual.rows()) throw std::invalid_argument("embedding blocks cover different state counts");
  Eigen::MatrixXd out(visual.rows(), visual.cols() + reward->cols());
  out << standardize_columns(visual), standardize_columns(*reward);
  return out;
}

PcaResult pca_reduce(const Eigen::MatrixXd& x, int k) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 2) throw std::invalid_argument("PCA needs at least two points");
  PcaResult result;
  result.requested_k = k;
  Eigen::Index feasible = std::min(n - 1, d);
  Eigen::Index use_k = k;
  if (k <= 0 || k > feasible) {
    use_k = feasible;
    result.clamped = true;
    std::cerr << "warning: PCA dimension " << k << " infeasible for " << n << "x" << d << " data; using " << use_k
              << "\n";
  }
  Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("covariance eigendecomposition failed");
  result.total_variance = cov.trace();
  result.eigenvalues.resize(use_k);
  result.components.resize(d, use_k);
  for (Eigen::Index j = 0; j < use_k; ++j) {
    Eigen::Index src = d - 1 - j;  // ascending order from the solver
    Eigen::VectorXd axis = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0) axis = -axis;
    result.components.col(j) = axis;
    result.eigenvalues[j] = std::max(0.0, solver.eigenvalues()[src]);
  }
  result.projected = centered * result.components;
  return result;
}

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + sq;
  d.rowwise() += sq.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

// Entropy (nats) of the row distribution exp(-beta * d) over j != i, and the
// normalized row written into `row`.
double row_entropy(const Eigen::MatrixXd& d, Eigen::Index i, double beta, double shift, Eigen::RowVectorXd& row) {
  const Eigen::Index n = d.rows();
  double sum = 0.0;
  double weighted = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) {
      row[j] = 0.0;
      continue;
    }
    double dj = d(i, j) - shift;
    double w = std::exp(-beta * dj);
    row[j] = w;
    sum += w;
    weighted += w * dj;
  }
  row /= sum;
  return std::log(sum) + beta * weighted / sum;
}

}  // namespace

Affinities calibrate_affinities(const Eigen::MatrixXd& x, double perplexity, double tolerance) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw std::invalid_argument("need at least two points");
  Eigen::MatrixXd d = squared_distances(x);
  Affinities out;
  out.conditional = Eigen::MatrixXd::Zero(n, n);
  out.beta.resize(n);
  out.perplexity.resize(n);
  const double target = std::log(perplexity);
  Eigen::RowVectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Shifting by the nearest distance keeps the largest weight at 1.
    double shift = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) shift = std::min(shift, d(i, j));
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double h = row_entropy(d, i, beta, shift, row);
    for (int iter = 0; iter < 200 && std::abs(h - target) > tolerance; ++iter) {
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
      h = row_entropy(d, i, beta, shift, row);
    }
    out.conditional.row(i) = row;
    out.beta[i] = beta;
    out.perplexity[i] = std::exp(h);
  }
  return out;
}

Eigen::MatrixXd joint_probabilities(const Eigen::MatrixXd& conditional) {
  const auto n = static_cast<double>(conditional.rows());
  return (conditional + conditional.transpose()) / (2.0 * n);
}

namespace {

// Student-t kernel matrix (zero diagonal) and its total mass.
double student_kernel(const Eigen::MatrixXd& y, Eigen::MatrixXd& num) {
  const Eigen::Index n = y.rows();
  num.resize(n, n);
  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    num(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double dx = y(i, 0) - y(j, 0);
      double dy = y(i, 1) - y(j, 1);
      double v = 1.0 / (1.0 + dx * dx + dy * dy);
      num(i, j) = v;
      num(j, i) = v;
      z += 2.0 * v;
    }
  }
  return z;
}

double kl_from_kernel(const Eigen::MatrixXd& p, const Eigen::MatrixXd& num, double z) {
  const Eigen::Index n = p.rows();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || p(i, j) <= 0.0) continue;
      kl += p(i, j) * std::log(p(i, j) * z / num(i, j));
    }
  }
  return kl;
}

void gradient_from_kernel(const Eigen::MatrixXd& p, double p_scale, const Eigen::MatrixXd& y,
                          const Eigen::MatrixXd& num, double z, Eigen::MatrixXd& grad) {
  const Eigen::Index n = y.rows();
  grad.setZero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    double gx = 0.0;
    double gy = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      double w = (p_scale * p(i, j) - num(i, j) / z) * num(i, j);
      gx += w * (y(i, 0) - y(j, 0));
      gy += w * (y(i, 1) - y(j, 1));
    }
    grad(i, 0) = 4.0 * gx;
    grad(i, 1) = 4.0 * gy;
  }
}

}  // namespace

double tsne_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
  Eigen::MatrixXd num;
  double z = student_kernel(y, num);
  return kl_from_kernel(p, num, z);
}

Eigen::MatrixXd tsne_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
  Eigen::MatrixXd num;
  double z = student_kernel(y, num);
  Eigen::MatrixXd grad;
  gradient_from_kernel(p, 1.0, y, num, z, grad);
  return grad;
}

TsneResult tsne(const Eigen::MatrixXd& x, const TsneConfig& config, Rng& rng) {
  const Eigen::Index n = x.rows();
  if (static_cast<double>(n) <= 3.0 * config.perplexity)
    throw std::invalid_argument("t-SNE needs more than 3 * perplexity points");
  auto affinities = calibrate_affinities(x, config.perplexity, config.perplexity_tolerance);
  Eigen::MatrixXd p = joint_probabilities(affinities.conditional);

  TsneResult result;
  result.perplexity = affinities.perplexity;
  result.y.resize(n, 2);
  std::normal_distribution<double> init(0.0, config.init_std);
  for (Eigen::Index i = 0; i < n; ++i) {
    result.y(i, 0) = init(rng);
    result.y(i, 1) = init(rng);
  }

  // Upper triangle of P, row-major over i < j, and sum p log p.
  const Eigen::Index pairs = n * (n - 1) / 2;
  std::vector<double> p_upper(static_cast<size_t>(pairs));
  std::vector<double> num(static_cast<size_t>(pairs));
  double p_log_p = 0.0;
  for (Eigen::Index i = 0, k = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j, ++k) {
      p_upper[static_cast<size_t>(k)] = p(i, j);
      if (p(i, j) > 0.0) p_log_p += 2.0 * p(i, j) * std::log(p(i, j));
    }

  // Student-t kernel of the current layout; returns Z.
  auto kernel = [&]() {
    double z = 0.0;
    for (Eigen::Index i = 0, k = 0; i < n; ++i) {
      const double yi0 = result.y(i, 0);
      const double yi1 = result.y(i, 1);
      for (Eigen::Index j = i + 1; j < n; ++j, ++k) {
        double dx = yi0 - result.y(j, 0);
        double dy = yi1 - result.y(j, 1);
        double v = 1.0 / (1.0 + dx * dx + dy * dy);
        num[static_cast<size_t>(k)] = v;
        z += v;
      }
    }
    return 2.0 * z;
  };
  // KL(P || Q) = sum p log p - sum p log num + log Z.
  auto kl = [&](double z) {
    double cross = 0.0;
    for (Eigen::Index k = 0; k < pairs; ++k) {
      double pk = p_upper[static_cast<size_t>(k)];
      if (pk > 0.0) cross += pk * std::log(num[static_cast<size_t>(k)]);
    }
    return p_log_p - 2.0 * cross + std::log(z);
  };

  Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  Eigen::MatrixXd grad(n, 2);
  result.kl_history.reserve(static_cast<size_t>(config.n_iter));
  double z = kernel();
  for (int it = 0; it < config.n_iter; ++it) {
    if (it == config.momentum_switch_iter || it == config.exaggeration_iters) {
      // The optimizer restarts its state when the exaggeration phase ends.
      update.setZero();
      gains.setOnes();
    }
    double exaggeration = it < config.exaggeration_iters ? config.early_exaggeration : 1.0;
    double momentum = it < config.momentum_switch_iter ? config.initial_momentum : config.final_momentum;
    grad.setZero();
    const double inv_z = 1.0 / z;
    for (Eigen::Index i = 0, k = 0; i < n; ++i) {
      const double yi0 = result.y(i, 0);
      const double yi1 = result.y(i, 1);
      double gx = 0.0;
      double gy = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j, ++k) {
        double v = num[static_cast<size_t>(k)];
        double w = 4.0 * (exaggeration * p_upper[static_cast<size_t>(k)] - v * inv_z) * v;
        double dx = w * (yi0 - result.y(j, 0));
        double dy = w * (yi1 - result.y(j, 1));
        gx += dx;
        gy += dy;
        grad(j, 0) -= dx;
        grad(j, 1) -= dy;
      }
      grad(i, 0) += gx;
      grad(i, 1) += gy;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        double& g = gains(i, c);
        g = (update(i, c) * grad(i, c) < 0.0) ? g + 0.2 : g * 0.8;
        g = std::max(g, config.min_gain);
        update(i, c) = momentum * update(i, c) - config.learning_rate * g * grad(i, c);
      }
    }
    result.y += update;
    result.y.rowwise() -= result.y.colwise().mean();
    z = kernel();
    result.kl_history.push_back(kl(z));
  }
  return result;
}

TsneResult embed_2d(const Eigen::MatrixXd& x, const TsneConfig& config, Rng& rng) {
  int feasible = static_cast<int>(std::min<Eigen::Index>(x.rows() - 1, x.cols()));
  return tsne(pca_reduce(x, std::min(config.pca_dim, feasible)).projected, config, rng);
}

std::vector<StateId> EmbeddingSnapshot::ids() const {
  std::vector<StateId> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.id);
  return out;
}

Eigen::MatrixXd EmbeddingSnapshot::coords() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), 2);
  for (size_t i = 0; i < points.size(); ++i) {
    out(static_cast<Eigen::Index>(i), 0) = points[i].x;
    out(static_cast<Eigen::Index>(i), 1) = points[i].y;
  }
  return out;
}

EmbeddingSnapshot make_snapshot(int iteration, const std::vector<StateId>& ids, const Eigen::MatrixXd& coords) {
  if (static_cast<Eigen::Index>(ids.size()) != coords.rows() || coords.cols() != 2)
    throw std::invalid_argument("snapshot ids and coordinates disagree");
  EmbeddingSnapshot snap;
  snap.iteration = iteration;
  for (size_t i = 0; i < ids.size(); ++i)
    snap.points.push_back({ids[i], coords(static_cast<Eigen::Index>(i), 0), coords(static_cast<Eigen::Index>(i), 1)});
  return snap;
}

nlohmann::json to_json(const EmbeddingSnapshot& snapshot) {
  auto points = nlohmann::json::array();
  for (const auto& p : snapshot.points) points.push_back({{"id", p.id}, {"x", p.x}, {"y", p.y}});
  return {{"iteration", snapshot.iteration},
          {"points", std::move(points)},
          {"thumbnail_url_template", snapshot.thumbnail_url_template}};
}

EmbeddingSnapshot snapshot_from_json(const nlohmann::json& j) {
  EmbeddingSnapshot snap;
  snap.iteration = j.at("iteration").get<int>();
  snap.thumbnail_url_template = j.value("thumbnail_url_template", snap.thumbnail_url_template);
  for (const auto& p : j.at("points"))
    snap.points.push_back({p.at("id").get<StateId>(), p.at("x").get<double>(), p.at("y").get<double>()});
  return snap;
}

}  // namespace prefviz::viz
