#include "adjd/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "adjd/errors.hpp"
#include "adjd/rng.hpp"

namespace adjd {
namespace {

std::vector<Eigen::Index> layer_widths(const DenoiserConfig& cfg) {
  std::vector<Eigen::Index> w;
  w.push_back(cfg.state_dim + 2 * cfg.n_freqs + cfg.cond_dim);
  w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
  w.push_back(cfg.state_dim);
  return w;
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw DataError(std::string("denoiser: non-finite ") + what);
}

}  // namespace

Denoiser::Denoiser(const DenoiserConfig& cfg)
    : cfg_(cfg), net_(layer_widths(cfg), cfg.activation) {
  if (cfg.state_dim < 1) throw ArgumentError("denoiser: state_dim must be >= 1");
  if (cfg.n_freqs < 0 || cfg.cond_dim < 0 || cfg.n_classes < 0)
    throw ArgumentError("denoiser: negative size in config");
  freqs_.resize(cfg.n_freqs);
  for (Eigen::Index k = 0; k < cfg.n_freqs; ++k) {
    const double u = cfg.n_freqs > 1 ? static_cast<double>(k) / (cfg.n_freqs - 1) : 0.0;
    freqs_[k] = cfg.freq_min * std::pow(cfg.freq_max / cfg.freq_min, u);
  }
  cond_table_ = Eigen::MatrixXd::Zero(cfg.n_classes + 1, cfg.cond_dim);
}

void Denoiser::set_freqs(const Eigen::VectorXd& f) {
  if (f.size() != cfg_.n_freqs) throw ArgumentError("denoiser: frequency count mismatch");
  freqs_ = f;
}

void Denoiser::init(Rng& rng) {
  net_.init(rng);
  for (Eigen::Index i = 0; i < cond_table_.rows(); ++i)
    for (Eigen::Index j = 0; j < cond_table_.cols(); ++j) cond_table_(i, j) = rng.normal();
}

Eigen::VectorXd Denoiser::embed(std::optional<Eigen::Index> label) const {
  if (!label) return cond_table_.row(null_index()).transpose();
  if (*label < 0 || *label >= cfg_.n_classes)
    throw ArgumentError("embed: label " + std::to_string(*label) + " outside [0, " +
                        std::to_string(cfg_.n_classes) + ")");
  return cond_table_.row(*label).transpose();
}

Eigen::MatrixXd Denoiser::time_features(const Eigen::RowVectorXd& t) const {
  Eigen::MatrixXd feats(2 * cfg_.n_freqs, t.size());
  for (Eigen::Index b = 0; b < t.size(); ++b) {
    for (Eigen::Index k = 0; k < cfg_.n_freqs; ++k) {
      const double phase = 2.0 * std::numbers::pi * freqs_[k] * t[b];
      feats(k, b) = std::sin(phase);
      feats(cfg_.n_freqs + k, b) = std::cos(phase);
    }
  }
  return feats;
}

Denoiser::Batch Denoiser::assemble(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& t,
                                   const Eigen::MatrixXd& c) const {
  const Eigen::Index d = cfg_.state_dim;
  if (x.rows() != d)
    throw ArgumentError("denoiser: state has " + std::to_string(x.rows()) +
                        " rows, expected " + std::to_string(d));
  const Eigen::Index batch = x.cols();
  if (t.size() != 1 && t.size() != batch)
    throw ArgumentError("denoiser: time must be 1 x 1 or 1 x batch");
  if (c.rows() != cfg_.cond_dim || (c.cols() != 1 && c.cols() != batch))
    throw ArgumentError("denoiser: condition must be cond_dim x 1 or cond_dim x batch");
  require_finite(x, "state");
  require_finite(t, "time");
  require_finite(c, "condition");

  Batch out{batch, Eigen::MatrixXd(net_.in_dim(), batch)};
  out.input.topRows(d) = x;
  const Eigen::MatrixXd feats = time_features(t);
  if (t.size() == 1)
    out.input.middleRows(d, 2 * cfg_.n_freqs) = feats.replicate(1, batch);
  else
    out.input.middleRows(d, 2 * cfg_.n_freqs) = feats;
  if (c.cols() == 1)
    out.input.bottomRows(cfg_.cond_dim) = c.replicate(1, batch);
  else
    out.input.bottomRows(cfg_.cond_dim) = c;
  return out;
}

Eigen::MatrixXd Denoiser::eps(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& t,
                              const Eigen::MatrixXd& c) const {
  return net_.forward(assemble(x, t, c).input);
}

Eigen::VectorXd Denoiser::eps(const Eigen::VectorXd& x, double t, const Eigen::VectorXd& c) const {
  Eigen::RowVectorXd tt(1);
  tt[0] = t;
  return eps(Eigen::MatrixXd(x), tt, Eigen::MatrixXd(c)).col(0);
}

Denoiser::Vjp Denoiser::vjp(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& t,
                            const Eigen::MatrixXd& c, const Eigen::MatrixXd& a,
                            GradMask mask) const {
  Batch in = assemble(x, t, c);
  if (a.rows() != cfg_.state_dim || a.cols() != in.size)
    throw ArgumentError("denoiser vjp: cotangent shape must match the output");
  require_finite(a, "cotangent");

  Mlp::Cache cache;
  Vjp out;
  out.out = net_.forward(in.input, &cache);
  if (mask.theta) out.theta = Eigen::VectorXd::Zero(net_.num_params());
  const Eigen::MatrixXd gin = net_.backward(cache, a, nullptr, mask.theta ? &out.theta : nullptr);

  const Eigen::Index d = cfg_.state_dim;
  const Eigen::Index nf = cfg_.n_freqs;
  out.x = gin.topRows(d);
  if (mask.cond) {
    if (c.cols() == 1)
      out.c = gin.bottomRows(cfg_.cond_dim).rowwise().sum();
    else
      out.c = gin.bottomRows(cfg_.cond_dim);
  }
  if (mask.time) {
    // d/dt sin(w t) = w cos(w t); d/dt cos(w t) = -w sin(w t).
    Eigen::RowVectorXd gt = Eigen::RowVectorXd::Zero(in.size);
    for (Eigen::Index b = 0; b < in.size; ++b) {
      const double tb = t.size() == 1 ? t[0] : t[b];
      double acc = 0.0;
      for (Eigen::Index k = 0; k < nf; ++k) {
        const double w = 2.0 * std::numbers::pi * freqs_[k];
        acc += gin(d + k, b) * w * std::cos(w * tb) - gin(d + nf + k, b) * w * std::sin(w * tb);
      }
      gt[b] = acc;
    }
    if (t.size() == 1) {
      out.t.resize(1);
      out.t[0] = gt.sum();
    } else {
      out.t = gt;
    }
  }
  return out;
}

Eigen::MatrixXd cfg_eval(const Denoiser& model, const Eigen::MatrixXd& x,
                         const Eigen::RowVectorXd& t, const Eigen::MatrixXd& c,
                         const CfgConfig& cfg) {
  if (cfg.scale == 1.0) return model.eps(x, t, c);
  // Both branches in one batched call: columns [cond | uncond].
  const Eigen::Index batch = x.cols();
  Eigen::MatrixXd xx(x.rows(), 2 * batch);
  xx << x, x;
  Eigen::RowVectorXd tt = t;
  if (t.size() != 1) {
    tt.resize(2 * batch);
    tt << t, t;
  }
  Eigen::MatrixXd cc(model.cond_dim(), 2 * batch);
  cc.leftCols(batch) = c.cols() == 1 ? Eigen::MatrixXd(c.replicate(1, batch)) : c;
  cc.rightCols(batch) = model.embed(std::nullopt).replicate(1, batch);
  const Eigen::MatrixXd e = model.eps(xx, tt, cc);
  return cfg.scale * e.leftCols(batch) + (1.0 - cfg.scale) * e.rightCols(batch);
}

Denoiser::Vjp cfg_vjp(const Denoiser& model, const Eigen::MatrixXd& x,
                      const Eigen::RowVectorXd& t, const Eigen::MatrixXd& c,
                      const Eigen::MatrixXd& a, const CfgConfig& cfg, GradMask mask) {
  if (cfg.scale == 1.0) return model.vjp(x, t, c, a, mask);
  const Eigen::Index batch = x.cols();
  Eigen::MatrixXd xx(x.rows(), 2 * batch);
  xx << x, x;
  Eigen::RowVectorXd tt(2 * batch);
  if (t.size() == 1)
    tt.setConstant(t[0]);
  else
    tt << t, t;
  Eigen::MatrixXd cc(model.cond_dim(), 2 * batch);
  cc.leftCols(batch) = c.cols() == 1 ? Eigen::MatrixXd(c.replicate(1, batch)) : c;
  cc.rightCols(batch) = model.embed(std::nullopt).replicate(1, batch);
  Eigen::MatrixXd aa(a.rows(), 2 * batch);
  aa << cfg.scale * a, (1.0 - cfg.scale) * a;

  Denoiser::Vjp both = model.vjp(xx, tt, cc, aa, mask);
  Denoiser::Vjp out;
  out.x = both.x.leftCols(batch) + both.x.rightCols(batch);
  out.theta = std::move(both.theta);
  out.out = cfg.scale * both.out.leftCols(batch) + (1.0 - cfg.scale) * both.out.rightCols(batch);
  if (mask.cond) {
    const Eigen::MatrixXd gc = both.c.leftCols(batch);
    if (c.cols() == 1)
      out.c = gc.rowwise().sum();
    else
      out.c = gc;
  }
  if (mask.time) {
    const Eigen::RowVectorXd gt = both.t.leftCols(batch) + both.t.rightCols(batch);
    if (t.size() == 1) {
      out.t.resize(1);
      out.t[0] = gt.sum();
    } else {
      out.t = gt;
    }
  }
  return out;
}

}  // namespace adjd
