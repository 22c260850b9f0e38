#include <doctest.h>

#include "adjd/classifier.hpp"
#include "adjd/errors.hpp"
#include "adjd/rng.hpp"
#include "../support/toy.hpp"

using namespace adjd;
using adjd::testing::trained_classifier;

namespace {

ToyClassifier random_classifier(std::uint64_t seed) {
  ToyClassifier c{ClassifierConfig{2, {16, 12}, 5}};
  Rng rng(seed);
  c.init(rng);
  return c;
}

}  // namespace

TEST_SUITE("classifier") {

TEST_CASE("softmax rows sum to one") {
  const ToyClassifier c = random_classifier(1);
  Rng rng(2);
  const Eigen::MatrixXd x = rng.normal_matrix(2, 30, 3.0);
  const Eigen::RowVectorXd s = c.log_probs(x).array().exp().colwise().sum();
  CHECK((s.array() - 1.0).abs().maxCoeff() < 1e-12);
  // large logits stay finite
  CHECK(log_softmax(Eigen::MatrixXd::Constant(3, 1, 800.0)).allFinite());
}

TEST_CASE("logits, features and log-prob pullbacks match finite differences") {
  const ToyClassifier c = random_classifier(3);
  Rng rng(4);
  const Eigen::MatrixXd x = rng.normal_matrix(2, 3);
  const Eigen::MatrixXd al = rng.normal_matrix(5, 3), af = rng.normal_matrix(12, 3);
  const std::vector<Eigen::Index> labels{0, 3, 4};
  Eigen::VectorXd lp;
  const Eigen::MatrixXd gl = c.logits_vjp(x, al), gf = c.features_vjp(x, af),
                        gp = c.logprob_grad(x, labels, &lp);
  auto lp_sum = [&](const Eigen::MatrixXd& z) {
    const Eigen::MatrixXd l = c.log_probs(z);
    double s = 0;
    for (int j = 0; j < 3; ++j) s += l(labels[j], j);
    return s;
  };
  CHECK(lp.sum() == doctest::Approx(lp_sum(x)).epsilon(1e-14));
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double nl = ((c.logits(xp) - c.logits(xm)).cwiseProduct(al)).sum() / (2 * h);
      const double nf = ((c.features(xp) - c.features(xm)).cwiseProduct(af)).sum() / (2 * h);
      const double np = (lp_sum(xp) - lp_sum(xm)) / (2 * h);
      CHECK(std::abs(gl(i, j) - nl) <= 1e-5 * std::max(1.0, std::abs(nl)));
      CHECK(std::abs(gf(i, j) - nf) <= 1e-5 * std::max(1.0, std::abs(nf)));
      CHECK(std::abs(gp(i, j) - np) <= 1e-5 * std::max(1.0, std::abs(np)));
    }
}

TEST_CASE("trained ring classifier: holdout accuracy") {
  Rng rng(Rng::derive(7, "holdout"));
  const LabeledSamples hold = sample_mixture(MixtureConfig{}, 1024, rng);
  CHECK(accuracy(trained_classifier(), hold) >= 0.9);
  CHECK(trained_classifier().feature_dim() == 64);
}

TEST_CASE("single-class data is classified perfectly") {
  ToyClassifier c{ClassifierConfig{2, {8}, 1}};
  Rng rng(9);
  c.init(rng);
  LabeledSamples d{rng.normal_matrix(2, 50), std::vector<Eigen::Index>(50, 0)};
  CHECK(accuracy(c, d) == 1.0);
}

TEST_CASE("training errors") {
  ToyClassifier c = random_classifier(1);
  Rng rng(1);
  CHECK_THROWS_AS(train_classifier(c, LabeledSamples{}, {}, rng), ArgumentError);
  LabeledSamples bad{Eigen::MatrixXd::Zero(2, 2), {0, 9}};
  CHECK_THROWS_AS(train_classifier(c, bad, {}, rng), ArgumentError);
  CHECK_THROWS_AS(c.logits(Eigen::MatrixXd::Zero(3, 1)), ArgumentError);
}

}
