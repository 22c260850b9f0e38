#include "adjd/training.hpp"

#include <cmath>

#include "adjd/errors.hpp"
#include "adjd/rng.hpp"

namespace adjd {
namespace {

struct Prepared {
  Eigen::MatrixXd xt;
  Eigen::MatrixXd cond;
};

Prepared prepare(const Denoiser& model, const NoiseSchedule& sched,
                 const ScoreMatchingBatch& batch) {
  const Eigen::Index n = batch.x0.cols();
  if (batch.t.size() != n || batch.noise.cols() != n ||
      static_cast<Eigen::Index>(batch.labels.size()) != n)
    throw ArgumentError("score matching: batch components disagree in size");
  Prepared p{Eigen::MatrixXd(batch.x0.rows(), n), Eigen::MatrixXd(model.cond_dim(), n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [alpha, sigma] = alpha_sigma(sched, batch.t[i]);
    p.xt.col(i) = alpha * batch.x0.col(i) + sigma * batch.noise.col(i);
    p.cond.col(i) = model.embed(batch.labels[static_cast<std::size_t>(i)]);
  }
  return p;
}

}  // namespace

double score_matching_loss(const Denoiser& model, const NoiseSchedule& sched,
                           const ScoreMatchingBatch& batch) {
  const Prepared p = prepare(model, sched, batch);
  const Eigen::MatrixXd r = model.eps(p.xt, batch.t, p.cond) - batch.noise;
  return r.squaredNorm() / static_cast<double>(batch.x0.cols());
}

ScoreMatchingGrad score_matching_grad(const Denoiser& model, const NoiseSchedule& sched,
                                      const ScoreMatchingBatch& batch) {
  const Prepared p = prepare(model, sched, batch);
  const double n = static_cast<double>(batch.x0.cols());
  const Eigen::MatrixXd r = model.eps(p.xt, batch.t, p.cond) - batch.noise;
  const Denoiser::Vjp g =
      model.vjp(p.xt, batch.t, p.cond, (2.0 / n) * r, GradMask{true, true, false});

  ScoreMatchingGrad out;
  out.loss = r.squaredNorm() / n;
  out.theta = g.theta;
  out.cond_table = Eigen::MatrixXd::Zero(model.cond_table().rows(), model.cond_table().cols());
  for (Eigen::Index i = 0; i < batch.x0.cols(); ++i) {
    const auto& label = batch.labels[static_cast<std::size_t>(i)];
    const Eigen::Index row = label ? *label : model.null_index();
    out.cond_table.row(row) += g.c.col(i).transpose();
  }
  return out;
}

ScoreMatchingBatch draw_batch(const LabeledSamples& data, const NoiseSchedule& sched,
                              Eigen::Index batch_size, double cond_drop_prob, Rng& rng) {
  if (data.empty()) throw ArgumentError("score matching: empty dataset");
  ScoreMatchingBatch b;
  b.x0.resize(data.dim(), batch_size);
  b.t.resize(batch_size);
  b.labels.resize(static_cast<std::size_t>(batch_size));
  for (Eigen::Index i = 0; i < batch_size; ++i) {
    const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.size())));
    b.x0.col(i) = data.x.col(idx);
    b.t[i] = sched.t_start + (sched.t_end - sched.t_start) * rng.uniform();
    if (rng.uniform() <= cond_drop_prob)
      b.labels[static_cast<std::size_t>(i)] = std::nullopt;
    else
      b.labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(idx)];
  }
  b.noise = rng.normal_matrix(data.dim(), batch_size);
  return b;
}

TrainResult train_score_matching(Denoiser& model, const LabeledSamples& data,
                                 const NoiseSchedule& sched, const TrainConfig& cfg, Rng& rng) {
  if (data.empty()) throw ArgumentError("train_score_matching: empty dataset");
  if (data.dim() != model.state_dim())
    throw ArgumentError("train_score_matching: data dimension does not match the model");
  if (!(cfg.cond_drop_prob >= 0.0 && cfg.cond_drop_prob < 1.0))
    throw ArgumentError("train_score_matching: cond_drop_prob must lie in [0, 1)");
  if (cfg.batch < 1) throw ArgumentError("train_score_matching: batch must be >= 1");
  sched.validate();

  const Eigen::Index n_theta = model.num_params();
  const Eigen::Index n_table = model.cond_table().size();
  AdamW opt(n_theta + n_table, cfg.opt);
  Eigen::VectorXd packed(n_theta + n_table);
  Eigen::VectorXd grad(n_theta + n_table);

  TrainResult result;
  result.loss_curve.reserve(static_cast<std::size_t>(std::max(0L, cfg.steps)));
  for (long step = 0; step < cfg.steps; ++step) {
    const ScoreMatchingBatch batch = draw_batch(data, sched, cfg.batch, cfg.cond_drop_prob, rng);
    const ScoreMatchingGrad g = score_matching_grad(model, sched, batch);
    if (!std::isfinite(g.loss))
      throw TrainingError("score matching loss diverged at step " + std::to_string(step), step);
    result.loss_curve.push_back(g.loss);

    packed.head(n_theta) = model.flatten();
    packed.tail(n_table) = Eigen::Map<const Eigen::VectorXd>(model.cond_table().data(), n_table);
    grad.head(n_theta) = g.theta;
    grad.tail(n_table) = Eigen::Map<const Eigen::VectorXd>(g.cond_table.data(), n_table);
    opt.step(packed, grad);
    model.unflatten(packed.head(n_theta));
    Eigen::Map<Eigen::VectorXd>(model.cond_table().data(), n_table) = packed.tail(n_table);
  }
  return result;
}

}  // namespace adjd
