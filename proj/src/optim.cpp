#include "adjd/optim.hpp"

#include <cmath>

#include "adjd/errors.hpp"

namespace adjd {

AdamW::AdamW(Eigen::Index n, AdamWConfig cfg)
    : cfg_(cfg), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void AdamW::set_mask(std::vector<bool> trainable) {
  if (static_cast<Eigen::Index>(trainable.size()) != m_.size())
    throw ArgumentError("AdamW: mask length mismatch");
  mask_ = std::move(trainable);
}

void AdamW::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw ArgumentError("AdamW: parameter/gradient length mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (mask_ && !(*mask_)[static_cast<std::size_t>(i)]) continue;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * params[i]);
  }
}

}  // namespace adjd
