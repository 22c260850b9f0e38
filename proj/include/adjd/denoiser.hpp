#pragma once

#include <optional>

#include <Eigen/Dense>

#include "adjd/mlp.hpp"

namespace adjd {

class Rng;

struct DenoiserConfig {
  Eigen::Index state_dim = 2;
  std::vector<Eigen::Index> hidden{128, 128, 128};
  Activation activation = Activation::silu;
  Eigen::Index n_freqs = 16;
  double freq_min = 0.1;
  double freq_max = 4.0;
  Eigen::Index cond_dim = 8;
  Eigen::Index n_classes = 8;

  bool operator==(const DenoiserConfig&) const = default;
};

/// Which gradients `Denoiser::vjp` should produce besides the state gradient.
struct GradMask {
  bool theta = true;
  bool cond = true;
  bool time = true;
};

/// eps_theta(x, t, c): an MLP over [x, sin(2 pi f_k t), cos(2 pi f_k t), c].
///
/// Batched: states are d x B, times 1 x B (or 1 x 1, broadcast), conditions
/// cond_dim x B (or cond_dim x 1, broadcast). The conditioning table holds one
/// row per class plus a trailing null row used for unconditional evaluation.
class Denoiser {
 public:
  struct Vjp {
    Eigen::MatrixXd x;       // d x B
    Eigen::VectorXd theta;   // flat, summed over the batch; empty if not requested
    Eigen::MatrixXd c;       // same shape as the condition argument
    Eigen::RowVectorXd t;    // same shape as the time argument
    Eigen::MatrixXd out;     // forward output, d x B
  };

  Denoiser() = default;
  explicit Denoiser(const DenoiserConfig& cfg);

  const DenoiserConfig& config() const { return cfg_; }
  Eigen::Index state_dim() const { return cfg_.state_dim; }
  Eigen::Index cond_dim() const { return cfg_.cond_dim; }
  Eigen::Index n_classes() const { return cfg_.n_classes; }
  Eigen::Index null_index() const { return cfg_.n_classes; }
  Eigen::Index num_params() const { return net_.num_params(); }

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  const Eigen::VectorXd& freqs() const { return freqs_; }
  void set_freqs(const Eigen::VectorXd& f);
  /// (n_classes + 1) x cond_dim; the last row is the null embedding.
  const Eigen::MatrixXd& cond_table() const { return cond_table_; }
  Eigen::MatrixXd& cond_table() { return cond_table_; }

  /// Network weights (not the conditioning table) as one flat vector.
  Eigen::VectorXd flatten() const { return net_.params(); }
  void unflatten(const Eigen::VectorXd& theta) { net_.set_params(theta); }

  void init(Rng& rng);

  /// Table row for `label`, or the null row when `label` is empty.
  Eigen::VectorXd embed(std::optional<Eigen::Index> label) const;

  Eigen::MatrixXd time_features(const Eigen::RowVectorXd& t) const;

  Eigen::MatrixXd eps(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& t,
                      const Eigen::MatrixXd& c) const;
  Eigen::VectorXd eps(const Eigen::VectorXd& x, double t, const Eigen::VectorXd& c) const;

  Vjp vjp(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& t, const Eigen::MatrixXd& c,
          const Eigen::MatrixXd& a, GradMask mask = {}) const;

 private:
  struct Batch {
    Eigen::Index size;
    Eigen::MatrixXd input;
  };
  Batch assemble(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& t,
                 const Eigen::MatrixXd& c) const;

  DenoiserConfig cfg_;
  Mlp net_;
  Eigen::VectorXd freqs_;
  Eigen::MatrixXd cond_table_;
};

/// Classifier-free guidance: eps~ = s eps(x,t,c) + (1-s) eps(x,t,null).
struct CfgConfig {
  double scale = 1.0;

  /// Network evaluations per guided call (both branches whenever s != 1).
  int network_calls() const { return scale == 1.0 ? 1 : 2; }
};

Eigen::MatrixXd cfg_eval(const Denoiser& model, const Eigen::MatrixXd& x,
                         const Eigen::RowVectorXd& t, const Eigen::MatrixXd& c,
                         const CfgConfig& cfg);

/// VJP of the guided output: cotangent weighted s / (1-s) into the two
/// branches; the condition gradient only sees the conditional branch.
Denoiser::Vjp cfg_vjp(const Denoiser& model, const Eigen::MatrixXd& x,
                      const Eigen::RowVectorXd& t, const Eigen::MatrixXd& c,
                      const Eigen::MatrixXd& a, const CfgConfig& cfg, GradMask mask = {});

}  // namespace adjd
