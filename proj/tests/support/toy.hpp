#pragma once

// Shared fixtures: a small trained 2-D mixture model and a constant-output
// denoiser for closed-form checks.

#include <Eigen/Dense>

#include "adjd/classifier.hpp"
#include "adjd/data.hpp"
#include "adjd/denoiser.hpp"
#include "adjd/rng.hpp"
#include "adjd/schedule.hpp"
#include "adjd/training.hpp"

namespace adjd::testing {

inline DenoiserConfig toy_config() {
  DenoiserConfig cfg;
  cfg.hidden = {64, 64};
  return cfg;
}

/// Trained once per process on the 8-mode ring.
inline const Denoiser& trained_toy() {
  static const Denoiser model = [] {
    Denoiser m(toy_config());
    Rng rng(Rng::derive(7, "fixture.toy"));
    Rng init = rng.substream("init");
    m.init(init);
    Rng data_rng = rng.substream("data");
    const LabeledSamples data = sample_mixture(MixtureConfig{}, 4096, data_rng);
    TrainConfig tc;
    tc.steps = 1500;
    tc.batch = 128;
    tc.opt.lr = 2e-3;
    Rng train_rng = rng.substream("train");
    train_score_matching(m, data, NoiseSchedule{}, tc, train_rng);
    return m;
  }();
  return model;
}

/// Ring classifier trained once per process (8192 points, 2000 steps).
inline const ToyClassifier& trained_classifier() {
  static const ToyClassifier clf = [] {
    ToyClassifier c{ClassifierConfig{}};
    Rng rng(Rng::derive(7, "fixture.classifier"));
    Rng init = rng.substream("init");
    c.init(init);
    Rng data_rng = rng.substream("data");
    const LabeledSamples data = sample_mixture(MixtureConfig{}, 8192, data_rng);
    Rng train_rng = rng.substream("train");
    train_classifier(c, data, ClassifierTrainConfig{}, train_rng);
    return c;
  }();
  return clf;
}

/// eps~ == b for every input: zero weights, output bias b.
inline Denoiser constant_model(const Eigen::VectorXd& b, Eigen::Index cond_dim = 8) {
  DenoiserConfig cfg;
  cfg.state_dim = b.size();
  cfg.hidden = {4};
  cfg.cond_dim = cond_dim;
  Denoiser m(cfg);
  Rng rng(1);
  m.init(rng);
  m.unflatten(Eigen::VectorXd::Zero(m.num_params()));
  m.net().bias(m.net().num_layers() - 1) = b;
  return m;
}

inline Eigen::RowVectorXd at(double t) {
  Eigen::RowVectorXd r(1);
  r[0] = t;
  return r;
}

}  // namespace adjd::testing
