#include "adjd/classifier.hpp"

#include <cmath>

#include "adjd/errors.hpp"
#include "adjd/rng.hpp"

namespace adjd {

namespace {

std::vector<Eigen::Index> widths_for(const ClassifierConfig& cfg) {
  if (cfg.hidden.empty() || cfg.hidden.back() < 1)
    throw ArgumentError("classifier: needs at least one non-empty hidden layer");
  if (cfg.n_classes < 1) throw ArgumentError("classifier: needs at least one class");
  std::vector<Eigen::Index> w{cfg.state_dim};
  w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
  w.push_back(cfg.n_classes);
  return w;
}

}  // namespace

ToyClassifier::ToyClassifier(const ClassifierConfig& cfg)
    : cfg_(cfg), net_(widths_for(cfg), Activation::tanh) {}

void ToyClassifier::init(Rng& rng) { net_.init(rng); }

Eigen::MatrixXd ToyClassifier::logits(const Eigen::MatrixXd& x) const {
  if (x.rows() != cfg_.state_dim) throw ArgumentError("classifier: input dimension mismatch");
  if (!x.allFinite()) throw DataError("classifier: non-finite input");
  return net_.forward(x);
}

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double m = z.col(j).maxCoeff();
    const double lse = m + std::log((z.col(j).array() - m).exp().sum());
    out.col(j) = z.col(j).array() - lse;
  }
  return out;
}

Eigen::MatrixXd ToyClassifier::log_probs(const Eigen::MatrixXd& x) const {
  return log_softmax(logits(x));
}

std::vector<Eigen::Index> ToyClassifier::predict(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd z = logits(x);
  std::vector<Eigen::Index> out(z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) z.col(j).maxCoeff(&out[j]);
  return out;
}

Eigen::MatrixXd ToyClassifier::features(const Eigen::MatrixXd& x) const {
  if (x.rows() != cfg_.state_dim) throw ArgumentError("classifier: input dimension mismatch");
  Mlp::Cache cache;
  net_.forward(x, &cache);
  return cache.inputs.back();
}

Eigen::MatrixXd ToyClassifier::logits_vjp(const Eigen::MatrixXd& x, const Eigen::MatrixXd& a) const {
  Mlp::Cache cache;
  net_.forward(x, &cache);
  return net_.backward(cache, a, nullptr, nullptr);
}

Eigen::MatrixXd ToyClassifier::features_vjp(const Eigen::MatrixXd& x,
                                            const Eigen::MatrixXd& a) const {
  Mlp::Cache cache;
  net_.forward(x, &cache);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(cfg_.n_classes, x.cols());
  return net_.backward(cache, zero, &a, nullptr);
}

Eigen::MatrixXd ToyClassifier::logprob_grad(const Eigen::MatrixXd& x,
                                            const std::vector<Eigen::Index>& labels,
                                            Eigen::VectorXd* values) const {
  if (static_cast<Eigen::Index>(labels.size()) != x.cols())
    throw ArgumentError("classifier: one label per column required");
  Mlp::Cache cache;
  const Eigen::MatrixXd lp = log_softmax(net_.forward(x, &cache));
  // d log p_y / d z = onehot(y) - softmax(z)
  Eigen::MatrixXd a = -lp.array().exp().matrix();
  if (values) values->resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (labels[j] < 0 || labels[j] >= cfg_.n_classes)
      throw ArgumentError("classifier: label out of range");
    a(labels[j], j) += 1.0;
    if (values) (*values)[j] = lp(labels[j], j);
  }
  return net_.backward(cache, a, nullptr, nullptr);
}

std::vector<double> train_classifier(ToyClassifier& clf, const LabeledSamples& data,
                                     const ClassifierTrainConfig& cfg, Rng& rng) {
  if (data.empty()) throw ArgumentError("train_classifier: empty dataset");
  if (data.dim() != clf.state_dim()) throw ArgumentError("train_classifier: dimension mismatch");
  for (auto l : data.labels)
    if (l < 0 || l >= clf.n_classes()) throw ArgumentError("train_classifier: label out of range");
  Mlp& net = clf.net();
  AdamW opt(net.num_params(), cfg.opt);
  std::vector<double> curve;
  curve.reserve(cfg.steps);
  const Eigen::Index bs = std::min(cfg.batch, data.size());
  Eigen::MatrixXd xb(data.dim(), bs);
  std::vector<Eigen::Index> yb(bs);
  for (long step = 0; step < cfg.steps; ++step) {
    for (Eigen::Index j = 0; j < bs; ++j) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.size())));
      xb.col(j) = data.x.col(i);
      yb[j] = data.labels[i];
    }
    Mlp::Cache cache;
    const Eigen::MatrixXd lp = log_softmax(net.forward(xb, &cache));
    Eigen::MatrixXd a = lp.array().exp().matrix();
    double loss = 0.0;
    for (Eigen::Index j = 0; j < bs; ++j) {
      loss -= lp(yb[j], j);
      a(yb[j], j) -= 1.0;
    }
    loss /= static_cast<double>(bs);
    a /= static_cast<double>(bs);
    if (!std::isfinite(loss)) throw TrainingError("train_classifier: non-finite loss", step);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.num_params());
    net.backward(cache, a, nullptr, &grad);
    opt.step(net.params(), grad);
    curve.push_back(loss);
  }
  return curve;
}

double accuracy(const ToyClassifier& clf, const LabeledSamples& data) {
  if (data.empty()) throw ArgumentError("accuracy: empty dataset");
  const auto pred = clf.predict(data.x);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < data.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace adjd
