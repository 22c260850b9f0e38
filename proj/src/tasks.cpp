#include "adjd/tasks.hpp"

#include <algorithm>
#include <cmath>

#include "adjd/errors.hpp"
#include "adjd/rng.hpp"

namespace adjd {

SampleRequest make_request(const NoiseSchedule& sched, const SampleSettings& s,
                           const Eigen::MatrixXd& x_T, const Eigen::MatrixXd& cond) {
  SampleRequest r;
  r.x_T = x_T;
  r.cond = cond;
  r.cfg = s.cfg;
  r.grid = time_grid(sched, s.steps, s.scheme);
  r.solver = s.solver;
  r.mode = SampleMode::reparam;
  return r;
}

AdjointResult backprop(const Denoiser& model, const NoiseSchedule& sched,
                       const SampleRequest& fwd, const SampleResult& out,
                       const Eigen::MatrixXd& dL_dx0, GradRequest want) {
  AdjointRequest a;
  a.cond = fwd.cond;
  a.cfg = fwd.cfg;
  a.grid = fwd.grid;
  a.solver = fwd.solver;
  a.final_y = out.final_y;
  a.dL_dx0 = dL_dx0;
  a.want = want;
  a.forward_grid = out.grid;
  return adjoint_backward(model, sched, a);
}

// ---------------------------------------------------------------- guidance

GuideResult optimize_noise(const Denoiser& model, const NoiseSchedule& sched,
                           const ToyClassifier& clf, const Eigen::MatrixXd& x_T,
                           const GuideConfig& cfg) {
  if (clf.state_dim() != model.state_dim())
    throw ArgumentError("optimize_noise: classifier and model dimensions differ");
  if (cfg.label < 0 || cfg.label >= clf.n_classes())
    throw ArgumentError("optimize_noise: target label out of range");
  if (cfg.epochs < 0) throw ArgumentError("optimize_noise: epochs must be >= 0");
  const Eigen::Index batch = x_T.cols();
  const std::vector<Eigen::Index> labels(batch, cfg.label);
  const Eigen::MatrixXd cond = model.embed(cfg.cond_label);

  GuideResult res;
  res.x_T = x_T;
  res.metrics.columns = {"epoch", "loss", "mean_logprob", "best_mean_logprob"};
  AdamW opt(x_T.size(), cfg.opt);

  for (long epoch = 0;; ++epoch) {
    const SampleRequest req = make_request(sched, cfg.sample, res.x_T, cond);
    const SampleResult out = sample_reparam(model, sched, req);
    res.nfe += out.stats.nfe;
    Eigen::VectorXd lp;
    const Eigen::MatrixXd g = clf.logprob_grad(out.x0, labels, &lp);
    if (epoch == 0) {
      res.x0_before = out.x0;
      res.initial_logprob = lp;
      res.best_logprob = lp;
      res.best_x_T = res.x_T;
      res.x0_best = out.x0;
    }
    for (Eigen::Index j = 0; j < batch; ++j) {
      if (lp[j] > res.best_logprob[j]) {
        res.best_logprob[j] = lp[j];
        res.best_x_T.col(j) = res.x_T.col(j);
        res.x0_best.col(j) = out.x0.col(j);
      }
    }
    res.metrics.add({static_cast<double>(epoch), -lp.sum(), lp.mean(), res.best_logprob.mean()});
    if (epoch == cfg.epochs) break;

    // L = -sum_j log p(label | x0_j)
    const AdjointResult adj = backprop(model, sched, req, out, -g, {true, false, false, false});
    res.nfe += adj.stats.nfe;
    opt.step(Eigen::Map<Eigen::VectorXd>(res.x_T.data(), res.x_T.size()),
             Eigen::Map<const Eigen::VectorXd>(adj.x_T.data(), adj.x_T.size()));
  }
  return res;
}

// ------------------------------------------------------------------ audit

std::string to_string(AuditLoss l) {
  return l == AuditLoss::feature_cosine ? "feature_cosine" : "cross_entropy";
}

AuditLoss parse_audit_loss(const std::string& s) {
  if (s == "feature_cosine") return AuditLoss::feature_cosine;
  if (s == "cross_entropy") return AuditLoss::cross_entropy;
  throw ValidationError("task.loss", "unknown audit loss '" + s + "'");
}

namespace {

// Per-column loss values and dL/dx0 for the audit objective (to be maximized).
Eigen::VectorXd audit_loss(const ToyClassifier& clf, AuditLoss kind, const Eigen::MatrixXd& x0,
                           const Eigen::MatrixXd& f0, const std::vector<Eigen::Index>& y0,
                           Eigen::MatrixXd& grad) {
  const Eigen::Index batch = x0.cols();
  Eigen::VectorXd val(batch);
  if (kind == AuditLoss::cross_entropy) {
    Eigen::VectorXd lp;
    grad = -clf.logprob_grad(x0, y0, &lp);
    val = -lp;
    return val;
  }
  // 1 - cos(F(x0), F(x0_orig))
  const Eigen::MatrixXd f = clf.features(x0);
  Eigen::MatrixXd gf(f.rows(), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const double na = std::max(f.col(j).norm(), 1e-12), nb = std::max(f0.col(j).norm(), 1e-12);
    const double cos = f.col(j).dot(f0.col(j)) / (na * nb);
    val[j] = 1.0 - cos;
    gf.col(j) = -(f0.col(j) / (na * nb) - cos * f.col(j) / (na * na));
  }
  grad = clf.features_vjp(x0, gf);
  return val;
}

}  // namespace

AuditResult audit_search(const Denoiser& model, const NoiseSchedule& sched,
                         const ToyClassifier& clf, const Eigen::MatrixXd& cond,
                         const Eigen::MatrixXd& x_T, const AuditConfig& cfg) {
  if (!(cfg.tau >= 0.0)) throw ArgumentError("audit_search: tau must be >= 0");
  if (clf.state_dim() != model.state_dim())
    throw ArgumentError("audit_search: classifier and model dimensions differ");
  const double eta = cfg.step_size < 0.0 ? 0.05 * cfg.tau : cfg.step_size;
  const Eigen::Index batch = x_T.cols();

  AuditResult res;
  res.metrics.columns = {"iter", "mean_loss", "max_abs_delta", "flipped"};
  res.delta = Eigen::MatrixXd::Zero(x_T.rows(), batch);
  res.success.assign(batch, false);

  const SampleRequest base_req = make_request(sched, cfg.sample, x_T, cond);
  const SampleResult base = sample_reparam(model, sched, base_req);
  res.nfe += base.stats.nfe;
  res.original_pred = clf.predict(base.x0);
  res.final_pred = res.original_pred;
  const Eigen::MatrixXd f0 = clf.features(base.x0);
  Eigen::MatrixXd x0_last = base.x0;

  for (long it = 0;; ++it) {
    const SampleRequest req = make_request(sched, cfg.sample, x_T + res.delta, cond);
    const SampleResult out = sample_reparam(model, sched, req);
    res.nfe += out.stats.nfe;
    const auto pred = clf.predict(out.x0);
    for (Eigen::Index j = 0; j < batch; ++j) {
      if (res.success[j]) continue;
      res.final_pred[j] = pred[j];
      x0_last.col(j) = out.x0.col(j);
      if (pred[j] != res.original_pred[j]) res.success[j] = true;
    }
    Eigen::MatrixXd g;
    const Eigen::VectorXd loss = audit_loss(clf, cfg.loss, out.x0, f0, res.original_pred, g);
    const long flipped = std::count(res.success.begin(), res.success.end(), true);
    res.metrics.add({static_cast<double>(it), loss.mean(), res.delta.cwiseAbs().maxCoeff(),
                     static_cast<double>(flipped)});
    if (it == cfg.steps || flipped == batch) break;

    const AdjointResult adj = backprop(model, sched, req, out, g, {true, false, false, false});
    res.nfe += adj.stats.nfe;
    for (Eigen::Index j = 0; j < batch; ++j) {
      if (res.success[j]) continue;
      const double scale = adj.x_T.col(j).cwiseAbs().maxCoeff();
      if (scale > 0.0) res.delta.col(j) += (eta / scale) * adj.x_T.col(j);
      res.delta.col(j) = res.delta.col(j).cwiseMax(-cfg.tau).cwiseMin(cfg.tau);
    }
    if (res.delta.cwiseAbs().maxCoeff() > cfg.tau)
      throw Error("internal", "audit_search: projection left the tau ball");
  }
  res.sample_distance = (x0_last - base.x0).colwise().norm().transpose();
  return res;
}

// ---------------------------------------------------------- style/content

Eigen::MatrixXd gram(const Eigen::VectorXd& f) {
  return f * f.transpose() / static_cast<double>(f.size());
}

Eigen::MatrixXd style_gram(const ToyClassifier& clf, const Eigen::MatrixXd& samples) {
  if (samples.cols() == 0) throw ArgumentError("style_gram: no samples");
  const Eigen::MatrixXd f = clf.features(samples);
  // mean_i f_i f_i^T / n
  return f * f.transpose() / static_cast<double>(f.rows() * f.cols());
}

Eigen::MatrixXd ring_style_gram(const ToyClassifier& clf, const MixtureConfig& ring,
                                Eigen::Index label, Eigen::Index n, Rng& rng) {
  if (label < 0 || label >= ring.n_modes) throw ArgumentError("ring_style_gram: label out of range");
  const LabeledSamples d = sample_mixture(ring, n, rng);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d.labels[i] == label) keep.push_back(i);
  return style_gram(clf, d.x(Eigen::all, keep));
}

namespace {

Eigen::MatrixXd cond_column(const Eigen::MatrixXd& cond, Eigen::Index i) {
  return cond.cols() == 1 ? cond : Eigen::MatrixXd(cond.col(i));
}

// One solve per triplet, exactly as the training loop samples them, so the
// content anchors are reproduced bitwise by the untouched model.
Eigen::MatrixXd sample_triplets(const Denoiser& model, const NoiseSchedule& sched,
                                const SampleSettings& s, const Eigen::MatrixXd& x_T,
                                const Eigen::MatrixXd& cond, long& nfe) {
  Eigen::MatrixXd x0(x_T.rows(), x_T.cols());
  for (Eigen::Index i = 0; i < x_T.cols(); ++i) {
    const SampleResult out =
        sample_reparam(model, sched, make_request(sched, s, x_T.col(i), cond_column(cond, i)));
    nfe += out.stats.nfe;
    x0.col(i) = out.x0;
  }
  return x0;
}

StyleLoss evaluate_style(const Denoiser& model, const NoiseSchedule& sched,
                         const ToyClassifier& clf, const StyleObjective& obj,
                         const SampleSettings& s, long& nfe) {
  const Eigen::MatrixXd x0 = sample_triplets(model, sched, s, obj.x_T, obj.cond, nfe);
  return style_content_loss(clf, obj.gram_style, x0, obj.x0_ref, obj.w_style, obj.w_content);
}

}  // namespace

StyleObjective make_style_objective(const Denoiser& model, const NoiseSchedule& sched,
                                    const SampleSettings& s, const Eigen::MatrixXd& gram_style,
                                    const Eigen::MatrixXd& x_T, const Eigen::MatrixXd& cond) {
  StyleObjective obj;
  obj.gram_style = gram_style;
  obj.x_T = x_T;
  obj.cond = cond;
  if (cond.cols() != 1 && cond.cols() != x_T.cols())
    throw ArgumentError("make_style_objective: one condition per triplet or a shared one");
  long nfe = 0;
  obj.x0_ref = sample_triplets(model, sched, s, x_T, cond, nfe);
  return obj;
}

StyleLoss style_content_loss(const ToyClassifier& clf, const Eigen::MatrixXd& gram_style,
                             const Eigen::MatrixXd& generated, const Eigen::MatrixXd& reference,
                             double w_style, double w_content) {
  if (generated.cols() == 0 || generated.cols() != reference.cols() ||
      generated.rows() != reference.rows())
    throw ArgumentError("style_content_loss: generated and reference batches must align");
  const Eigen::Index n = clf.feature_dim();
  if (gram_style.rows() != n || gram_style.cols() != n)
    throw ArgumentError("style_content_loss: style Gram must be feature_dim x feature_dim");
  const double N = static_cast<double>(generated.cols()), nd = static_cast<double>(n);
  const Eigen::MatrixXd f = clf.features(generated);
  const Eigen::MatrixXd fr = clf.features(reference);
  StyleLoss out;
  Eigen::MatrixXd gf(n, generated.cols());
  for (Eigen::Index i = 0; i < generated.cols(); ++i) {
    const Eigen::MatrixXd diff = gram(f.col(i)) - gram_style;
    const Eigen::VectorXd dc = fr.col(i) - f.col(i);
    out.style += w_style * diff.squaredNorm() / (nd * nd) / N;
    out.content += w_content * dc.squaredNorm() / nd / N;
    // d/df mean((ff^T/n - S)^2) = 4 (ff^T/n - S) f / n^3 for symmetric S
    gf.col(i) = (w_style * 4.0 / (nd * nd * nd) * (diff * f.col(i)) - w_content * 2.0 / nd * dc) / N;
  }
  out.value = out.style + out.content;
  out.grad = clf.features_vjp(generated, gf);
  return out;
}

std::vector<bool> last_layers_mask(const Mlp& net, std::size_t layers) {
  std::vector<bool> mask(net.num_params(), false);
  const std::size_t L = net.num_layers();
  const std::size_t first = layers >= L ? 0 : L - layers;
  for (Eigen::Index i = net.weight_offset(first); i < net.num_params(); ++i) mask[i] = true;
  if (layers == 0) std::fill(mask.begin(), mask.end(), false);
  return mask;
}


FinetuneResult finetune_weights(Denoiser& model, const NoiseSchedule& sched,
                                const ToyClassifier& clf, const StyleObjective& obj,
                                const FinetuneConfig& cfg) {
  if (obj.size() == 0) throw ArgumentError("finetune_weights: empty triplet set");
  if (obj.x0_ref.cols() != obj.size())
    throw ArgumentError("finetune_weights: triplet arrays disagree in length");
  if (clf.state_dim() != model.state_dim())
    throw ArgumentError("finetune_weights: classifier and model dimensions differ");
  FinetuneResult res;
  res.trainable = last_layers_mask(model.net(), cfg.trainable_layers);
  res.metrics.columns = {"epoch", "loss", "style", "content"};
  AdamW opt(model.num_params(), cfg.opt);
  opt.set_mask(res.trainable);

  auto record = [&](long epoch) {
    const StyleLoss l = evaluate_style(model, sched, clf, obj, cfg.sample, res.nfe);
    res.loss_curve.push_back(l.value);
    res.metrics.add({static_cast<double>(epoch), l.value, l.style, l.content});
  };
  record(0);
  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (Eigen::Index i = 0; i < obj.size(); ++i) {
      const Eigen::MatrixXd c = cond_column(obj.cond, i);
      const SampleRequest req = make_request(sched, cfg.sample, obj.x_T.col(i), c);
      const SampleResult out = sample_reparam(model, sched, req);
      res.nfe += out.stats.nfe;
      const StyleLoss l = style_content_loss(clf, obj.gram_style, out.x0, obj.x0_ref.col(i),
                                             obj.w_style, obj.w_content);
      const AdjointResult adj = backprop(model, sched, req, out, l.grad, {true, true, false, false});
      res.nfe += adj.stats.nfe;
      Eigen::VectorXd theta = model.flatten();
      opt.step(theta, adj.theta);
      model.unflatten(theta);
    }
    record(epoch);
  }
  return res;
}

// --------------------------------------------------------------- inversion

std::string to_string(Composition c) { return c == Composition::sum ? "sum" : "concat"; }

Composition parse_composition(const std::string& s) {
  if (s == "sum") return Composition::sum;
  if (s == "concat") return Composition::concat;
  throw ValidationError("task.composition", "unknown composition '" + s + "'");
}

InversionResult invert_embedding(const Denoiser& model, const NoiseSchedule& sched,
                                 const Eigen::MatrixXd& x_T, const Eigen::MatrixXd& target,
                                 const InversionConfig& cfg) {
  if (cfg.composition == Composition::concat)
    throw UnsupportedError(
        "invert_embedding: concatenation needs a multi-slot condition; this model has one "
        "embedding slot, use composition=sum");
  const Eigen::Index cd = model.cond_dim();
  const Eigen::VectorXd base = cfg.c_base.size() == 0 ? Eigen::VectorXd::Zero(cd) : cfg.c_base;
  if (base.size() != cd) throw ArgumentError("invert_embedding: c_base has the wrong dimension");
  Eigen::VectorXd emb = cfg.init ? *cfg.init : model.embed(std::nullopt);
  if (emb.size() != cd) throw ArgumentError("invert_embedding: initial embedding has the wrong dimension");
  if (target.rows() != x_T.rows() || target.cols() != x_T.cols())
    throw ArgumentError("invert_embedding: target must match x_T");
  const double n = static_cast<double>(target.size());

  InversionResult res;
  res.metrics.columns = {"step", "loss", "best_loss"};
  AdamW opt(cd, cfg.opt);
  for (long step = 0;; ++step) {
    const SampleRequest req = make_request(sched, cfg.sample, x_T, base + emb);
    const SampleResult out = sample_reparam(model, sched, req);
    res.nfe += out.stats.nfe;
    const Eigen::MatrixXd r = out.x0 - target;
    const double loss = r.squaredNorm() / n;
    if (step == 0) {
      res.initial_loss = res.best_loss = loss;
      res.best_embedding = emb;
    } else if (loss < res.best_loss) {
      res.best_loss = loss;
      res.best_embedding = emb;
    }
    res.final_loss = loss;
    res.metrics.add({static_cast<double>(step), loss, res.best_loss});
    if (step == cfg.steps) break;
    const AdjointResult adj = backprop(model, sched, req, out, (2.0 / n) * r, {true, false, true, false});
    res.nfe += adj.stats.nfe;
    opt.step(emb, adj.cond.col(0));
  }
  res.embedding = emb;
  return res;
}

}  // namespace adjd
