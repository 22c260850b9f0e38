#pragma once

#include <vector>

#include <Eigen/Dense>

namespace adjd {

class Rng;

/// Samples are columns of `x`; `labels[i]` is the class of column i.
struct LabeledSamples {
  Eigen::MatrixXd x;
  std::vector<Eigen::Index> labels;

  Eigen::Index size() const { return x.cols(); }
  Eigen::Index dim() const { return x.rows(); }
  bool empty() const { return x.cols() == 0; }
};

/// Isotropic Gaussians with centers evenly spaced on a circle (d = 2).
struct MixtureConfig {
  Eigen::Index n_modes = 8;
  double radius = 1.0;
  double std = 0.1;

  bool operator==(const MixtureConfig&) const = default;
};

Eigen::MatrixXd mixture_centers(const MixtureConfig& cfg);
LabeledSamples sample_mixture(const MixtureConfig& cfg, Eigen::Index n, Rng& rng);

}  // namespace adjd
