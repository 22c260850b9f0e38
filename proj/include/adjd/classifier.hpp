#pragma once

#include <vector>

#include <Eigen/Dense>

#include "adjd/data.hpp"
#include "adjd/mlp.hpp"
#include "adjd/optim.hpp"

namespace adjd {

class Rng;

struct ClassifierConfig {
  Eigen::Index state_dim = 2;
  std::vector<Eigen::Index> hidden{64, 64};
  Eigen::Index n_classes = 8;

  bool operator==(const ClassifierConfig&) const = default;
};

/// x -> logits over K classes (tanh MLP). The last hidden activation doubles
/// as the feature map F(x) used by the style, content and audit losses.
class ToyClassifier {
 public:
  ToyClassifier() = default;
  explicit ToyClassifier(const ClassifierConfig& cfg);

  const ClassifierConfig& config() const { return cfg_; }
  Eigen::Index state_dim() const { return cfg_.state_dim; }
  Eigen::Index n_classes() const { return cfg_.n_classes; }
  Eigen::Index feature_dim() const { return cfg_.hidden.back(); }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

  void init(Rng& rng);

  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const;
  /// Column-wise log-softmax of the logits.
  Eigen::MatrixXd log_probs(const Eigen::MatrixXd& x) const;
  std::vector<Eigen::Index> predict(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd features(const Eigen::MatrixXd& x) const;

  /// d/dx of sum_j log p(label_j | x_j); returns the per-column values too.
  Eigen::MatrixXd logprob_grad(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& labels,
                               Eigen::VectorXd* values = nullptr) const;
  /// Pullback of a cotangent on the logits to x.
  Eigen::MatrixXd logits_vjp(const Eigen::MatrixXd& x, const Eigen::MatrixXd& a) const;
  /// Pullback of a cotangent on the features to x.
  Eigen::MatrixXd features_vjp(const Eigen::MatrixXd& x, const Eigen::MatrixXd& a) const;

 private:
  ClassifierConfig cfg_;
  Mlp net_;
};

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits);

struct ClassifierTrainConfig {
  long steps = 2000;
  Eigen::Index batch = 256;
  AdamWConfig opt{1e-2};

  bool operator==(const ClassifierTrainConfig&) const = default;
};

/// Minibatch cross-entropy training; returns the per-step loss curve.
std::vector<double> train_classifier(ToyClassifier& clf, const LabeledSamples& data,
                                     const ClassifierTrainConfig& cfg, Rng& rng);

double accuracy(const ToyClassifier& clf, const LabeledSamples& data);

}  // namespace adjd
