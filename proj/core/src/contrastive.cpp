#include "prefviz/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace prefviz::contrastive {

namespace {

constexpr double kMinNorm = 1e-12;

struct Logits {
  Eigen::MatrixXd z;       // normalized embeddings, D x 2B
  Eigen::VectorXd norms;   // pre-normalization column norms
  Eigen::MatrixXd logits;  // B x B
};

Eigen::MatrixXd join(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives) {
  if (anchors.cols() != positives.cols() || anchors.rows() != positives.rows())
    throw std::invalid_argument("anchors and positives must have matching shapes");
  if (anchors.cols() < 2) throw std::invalid_argument("InfoNCE needs a batch of at least 2");
  Eigen::MatrixXd x(anchors.rows(), 2 * anchors.cols());
  x << anchors, positives;
  return x;
}

Logits make_logits(const Eigen::MatrixXd& u, Eigen::Index batch, double temperature) {
  Logits out;
  out.norms = u.colwise().norm().transpose().cwiseMax(kMinNorm);
  out.z = u * out.norms.cwiseInverse().asDiagonal();
  out.logits = out.z.leftCols(batch).transpose() * out.z.rightCols(batch) / temperature;
  return out;
}

// Row-wise softmax and the per-row cross-entropy against the diagonal.
Eigen::VectorXd row_terms(const Eigen::MatrixXd& logits, Eigen::MatrixXd* softmax) {
  const Eigen::Index b = logits.rows();
  Eigen::VectorXd terms(b);
  if (softmax) softmax->resize(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp().matrix();
    double s = e.sum();
    terms[i] = -(logits(i, i) - m) + std::log(s);
    if (softmax) softmax->row(i) = e / s;
  }
  return terms;
}

}  // namespace

ContrastiveNet create(const ContrastiveConfig& config, Rng& rng) {
  std::vector<int> sizes{kInputDim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.embed_dim);
  return {nn::Network::random(sizes, rng)};
}

Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& m) {
  Eigen::VectorXd norms = m.colwise().norm().transpose().cwiseMax(kMinNorm);
  return m * norms.cwiseInverse().asDiagonal();
}

Eigen::VectorXd infonce_terms(const ContrastiveNet& model, const Eigen::MatrixXd& anchors,
                              const Eigen::MatrixXd& positives, double temperature) {
  Eigen::MatrixXd x = join(anchors, positives);
  auto l = make_logits(model.net.forward(x), anchors.cols(), temperature);
  return row_terms(l.logits, nullptr);
}

double infonce_loss(const ContrastiveNet& model, const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives,
                    double temperature) {
  return infonce_terms(model, anchors, positives, temperature).mean();
}

nn::LossGrad infonce_loss_grad(const ContrastiveNet& model, const Eigen::MatrixXd& anchors,
                               const Eigen::MatrixXd& positives, double temperature) {
  const Eigen::Index b = anchors.cols();
  return nn::grad(
      model.net,
      [&](const Eigen::MatrixXd& u, Eigen::MatrixXd& d_u) {
        auto l = make_logits(u, b, temperature);
        Eigen::MatrixXd softmax;
        double loss = row_terms(l.logits, &softmax).mean();
        Eigen::MatrixXd g = (softmax - Eigen::MatrixXd::Identity(b, b)) / static_cast<double>(b);
        Eigen::MatrixXd d_z(u.rows(), 2 * b);
        d_z.leftCols(b) = l.z.rightCols(b) * g.transpose() / temperature;
        d_z.rightCols(b) = l.z.leftCols(b) * g / temperature;
        // Through z = u / |u|: du = (dz - z (z . dz)) / |u|.
        Eigen::RowVectorXd proj = (l.z.array() * d_z.array()).colwise().sum();
        d_u = (d_z - l.z * proj.asDiagonal()) * l.norms.cwiseInverse().asDiagonal();
        return loss;
      },
      join(anchors, positives));
}

TrainStats train_on_frames(ContrastiveNet& model, const std::vector<render::Frame>& frames,
                           const ContrastiveConfig& config, Rng& rng) {
  TrainStats stats;
  if (config.epochs <= 0) return stats;
  const auto batch = static_cast<size_t>(config.batch_size);
  if (frames.size() < batch || batch < 2)
    throw std::invalid_argument("contrastive training needs at least one batch of states");
  auto adam = nn::make_adam(model.net);
  std::vector<size_t> order(frames.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Eigen::MatrixXd anchors(kInputDim, static_cast<Eigen::Index>(batch));
  Eigen::MatrixXd positives(kInputDim, static_cast<Eigen::Index>(batch));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (size_t start = 0; start + batch <= order.size(); start += batch) {
      for (size_t k = 0; k < batch; ++k) {
        const auto& frame = frames[order[start + k]];
        anchors.col(static_cast<Eigen::Index>(k)) = render::random_crop(frame, rng).flat();
        positives.col(static_cast<Eigen::Index>(k)) = render::random_crop(frame, rng).flat();
      }
      auto lg = infonce_loss_grad(model, anchors, positives, config.temperature);
      nn::adam_step(model.net, lg.grads, adam, config.lr);
      total += lg.loss;
      ++batches;
    }
    stats.epoch_loss.push_back(total / batches);
  }
  return stats;
}

TrainStats train_contrastive(ContrastiveNet& model, const env::EnvSpec& spec,
                             const std::vector<env::EnvState>& states, const ContrastiveConfig& config, Rng& rng) {
  if (config.epochs <= 0) return {};
  std::vector<render::Frame> frames;
  frames.reserve(states.size());
  for (const auto& s : states) frames.push_back(render::render(spec, s));
  return train_on_frames(model, frames, config, rng);
}

Eigen::VectorXd embed_visual(const ContrastiveNet& model, const env::EnvSpec& spec, const env::EnvState& state) {
  Eigen::MatrixXd x = render::render(spec, state).flat();
  return normalize_columns(model.net.forward(x)).col(0);
}

Eigen::MatrixXd embed_frames(const ContrastiveNet& model, const std::vector<render::Frame>& frames) {
  Eigen::MatrixXd x(kInputDim, static_cast<Eigen::Index>(frames.size()));
  for (size_t i = 0; i < frames.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = frames[i].flat();
  return normalize_columns(model.net.forward(x)).transpose();
}

}  // namespace prefviz::contrastive
