#include "adjd/data.hpp"

#include <cmath>
#include <numbers>

#include "adjd/errors.hpp"
#include "adjd/rng.hpp"

namespace adjd {

Eigen::MatrixXd mixture_centers(const MixtureConfig& cfg) {
  if (cfg.n_modes < 1) throw ArgumentError("mixture: n_modes must be >= 1");
  Eigen::MatrixXd c(2, cfg.n_modes);
  for (Eigen::Index k = 0; k < cfg.n_modes; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / cfg.n_modes;
    c(0, k) = cfg.radius * std::cos(angle);
    c(1, k) = cfg.radius * std::sin(angle);
  }
  return c;
}

LabeledSamples sample_mixture(const MixtureConfig& cfg, Eigen::Index n, Rng& rng) {
  const Eigen::MatrixXd centers = mixture_centers(cfg);
  LabeledSamples out{Eigen::MatrixXd(2, n), std::vector<Eigen::Index>(static_cast<std::size_t>(n))};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(cfg.n_modes)));
    out.labels[static_cast<std::size_t>(i)] = k;
    out.x(0, i) = centers(0, k) + cfg.std * rng.normal();
    out.x(1, i) = centers(1, k) + cfg.std * rng.normal();
  }
  return out;
}

}  // namespace adjd
