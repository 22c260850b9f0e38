#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace adjd {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled

  bool operator==(const AdamWConfig&) const = default;
};

/// Adam with decoupled weight decay over a flat parameter vector. Entries
/// outside the optional mask are never touched (bitwise frozen).
class AdamW {
 public:
  AdamW(Eigen::Index n, AdamWConfig cfg);
  void set_mask(std::vector<bool> trainable);
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad);
  long steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  Eigen::VectorXd m_, v_;
  std::optional<std::vector<bool>> mask_;
  long t_ = 0;
};

}  // namespace adjd
