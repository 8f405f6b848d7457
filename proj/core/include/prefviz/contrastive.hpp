#pragma once

// InfoNCE encoder over rendered frames. Two random crops of one frame form a
// positive pair; the other positives in the batch act as negatives.

#include <vector>

#include <Eigen/Core>

#include "prefviz/common.hpp"
#include "prefviz/diffnet.hpp"
#include "prefviz/env.hpp"
#include "prefviz/render.hpp"

namespace prefviz::contrastive {

inline constexpr int kInputDim = render::kFrameSize * render::kFrameSize;

struct ContrastiveConfig {
  int embed_dim = 64;
  std::vector<int> hidden{256};
  double temperature = 0.1;
  int epochs = 5;
  int batch_size = 50;
  double lr = 5e-5;
};

struct ContrastiveNet {
  nn::Network net;
  int embed_dim() const { return net.output_dim(); }
};

ContrastiveNet create(const ContrastiveConfig& config, Rng& rng);

/// Column-wise L2 normalisation.
Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& m);

/// Mean cross-entropy of picking positive i for anchor i among the B
/// positives, with logits cos(z_a_i, z_p_j) / temperature. Frames are
/// columns (4096 x B). Throws std::invalid_argument when B < 2.
double infonce_loss(const ContrastiveNet& model, const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives,
                    double temperature);

/// Per-anchor losses (length B).
Eigen::VectorXd infonce_terms(const ContrastiveNet& model, const Eigen::MatrixXd& anchors,
                              const Eigen::MatrixXd& positives, double temperature);

nn::LossGrad infonce_loss_grad(const ContrastiveNet& model, const Eigen::MatrixXd& anchors,
                               const Eigen::MatrixXd& positives, double temperature);

struct TrainStats {
  /// Mean batch loss of each epoch.
  std::vector<double> epoch_loss;
};

/// Renders every state, then runs `config.epochs` shuffled passes of Adam on
/// (crop, crop) pairs. Throws std::invalid_argument when fewer states than
/// one batch are given.
TrainStats train_contrastive(ContrastiveNet& model, const env::EnvSpec& spec,
                             const std::vector<env::EnvState>& states, const ContrastiveConfig& config, Rng& rng);

/// Same, from pre-rendered frames.
TrainStats train_on_frames(ContrastiveNet& model, const std::vector<render::Frame>& frames,
                           const ContrastiveConfig& config, Rng& rng);

/// Unit-norm embedding of the un-augmented render.
Eigen::VectorXd embed_visual(const ContrastiveNet& model, const env::EnvSpec& spec, const env::EnvState& state);

/// Unit-norm embeddings as rows (N x embed_dim).
Eigen::MatrixXd embed_frames(const ContrastiveNet& model, const std::vector<render::Frame>& frames);

}  // namespace prefviz::contrastive
