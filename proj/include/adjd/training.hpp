#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "adjd/data.hpp"
#include "adjd/denoiser.hpp"
#include "adjd/optim.hpp"
#include "adjd/schedule.hpp"

namespace adjd {

class Rng;

/// One denoising score-matching minibatch: x_t = alpha_t x0 + sigma_t noise,
/// with the conditioning row for each column (nullopt = null row).
struct ScoreMatchingBatch {
  Eigen::MatrixXd x0;
  Eigen::RowVectorXd t;
  Eigen::MatrixXd noise;
  std::vector<std::optional<Eigen::Index>> labels;
};

struct ScoreMatchingGrad {
  double loss = 0.0;
  Eigen::VectorXd theta;       // d loss / d network weights
  Eigen::MatrixXd cond_table;  // d loss / d conditioning table
};

/// Mean over the batch of ||eps_theta(x_t, t, c) - noise||^2.
double score_matching_loss(const Denoiser& model, const NoiseSchedule& sched,
                           const ScoreMatchingBatch& batch);
ScoreMatchingGrad score_matching_grad(const Denoiser& model, const NoiseSchedule& sched,
                                      const ScoreMatchingBatch& batch);

/// t ~ U[t_start, t_end], noise ~ N(0, I), labels dropped to null with
/// probability `cond_drop_prob`.
ScoreMatchingBatch draw_batch(const LabeledSamples& data, const NoiseSchedule& sched,
                              Eigen::Index batch_size, double cond_drop_prob, Rng& rng);

struct TrainConfig {
  long steps = 5000;
  Eigen::Index batch = 256;
  double cond_drop_prob = 0.1;
  AdamWConfig opt{};

  bool operator==(const TrainConfig&) const = default;
};

struct TrainResult {
  std::vector<double> loss_curve;
};

/// Trains the network weights and the conditioning table jointly.
TrainResult train_score_matching(Denoiser& model, const LabeledSamples& data,
                                 const NoiseSchedule& sched, const TrainConfig& cfg, Rng& rng);

}  // namespace adjd
