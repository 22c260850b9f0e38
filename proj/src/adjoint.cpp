#include "adjd/adjoint.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>

#include "adjd/errors.hpp"
#include "adjd/parallel.hpp"
#include "adjd/rng.hpp"

namespace adjd {
namespace {

std::atomic<long> g_naive_calls{0};

Eigen::RowVectorXd scalar_time(double t) {
  Eigen::RowVectorXd tt(1);
  tt[0] = t;
  return tt;
}

// Everything the reparam field contributes at one (y, rho) for cotangent `a`:
// F = eps~(alpha y, t, c) and the pullbacks of a through dF/dy, dF/dtheta,
// dF/dc and dF/drho.
struct FieldPullback {
  Eigen::MatrixXd F;
  Eigen::MatrixXd y;
  Eigen::VectorXd theta;
  Eigen::MatrixXd c;
  double rho = 0.0;
};

FieldPullback field_pullback(const Denoiser& model, const NoiseSchedule& sched,
                             const Eigen::MatrixXd& cond, const CfgConfig& cfg,
                             const Eigen::MatrixXd& y, double rho, const Eigen::MatrixXd& a,
                             GradMask mask) {
  const double t = gamma_inv(sched, rho);
  const double alpha = alpha_sigma(sched, t).alpha;
  Denoiser::Vjp v = cfg_vjp(model, alpha * y, scalar_time(t), cond, a, cfg, mask);
  FieldPullback out;
  out.F = std::move(v.out);
  out.y = alpha * v.x;
  out.theta = std::move(v.theta);
  out.c = std::move(v.c);
  if (mask.time) {
    // x = alpha(t(rho)) y, so dF/drho = eps_x (y dalpha/drho) + eps_t dt/drho.
    const double dt_drho = 1.0 / gamma_dot(sched, t);
    const double dalpha_drho = alpha * drift_diffusion(sched, t).f * dt_drho;
    out.rho = v.x.cwiseProduct(y).sum() * dalpha_drho + v.t[0] * dt_drho;
  }
  return out;
}

void check_shapes(const Denoiser& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& seed,
                  const Eigen::MatrixXd& cond) {
  if (y.rows() != model.state_dim() || y.cols() < 1)
    throw ArgumentError("adjoint: final state must be state_dim x batch");
  if (seed.rows() != y.rows() || seed.cols() != y.cols())
    throw ArgumentError("adjoint: dL/dx0 must match the final state shape");
  if (cond.rows() != model.cond_dim() || (cond.cols() != 1 && cond.cols() != y.cols()))
    throw ArgumentError("adjoint: condition must be cond_dim x 1 or cond_dim x batch");
  if (!y.allFinite()) throw DataError("adjoint: final state is not finite");
  if (!seed.allFinite()) throw DataError("adjoint: dL/dx0 is not finite");
}

void check_grid(const NoiseSchedule& sched, const TimeGrid& grid) {
  const auto& p = grid.points;
  if (p.size() < 2) throw ArgumentError("adjoint: grid needs at least one step");
  if (std::abs(p.front() - sched.t_end) > 1e-12 || std::abs(p.back() - sched.t_start) > 1e-12)
    throw ArgumentError("adjoint: grid must run from t_end to t_start");
  for (std::size_t i = 1; i < p.size(); ++i)
    if (!(p[i] < p[i - 1])) throw ArgumentError("adjoint: grid must be strictly decreasing");
}

// Augmented state layout: [y | a_y | a_theta | a_c | a_rho].
struct Layout {
  Eigen::Index ny, ntheta, nc, nrho;
  Eigen::Index a() const { return ny; }
  Eigen::Index theta() const { return 2 * ny; }
  Eigen::Index c() const { return 2 * ny + ntheta; }
  Eigen::Index rho() const { return 2 * ny + ntheta + nc; }
  Eigen::Index size() const { return 2 * ny + ntheta + nc + nrho; }
};

AdjointResult adjoint_chunk(const Denoiser& model, const NoiseSchedule& sched,
                            const AdjointRequest& req) {
  const Eigen::Index d = req.final_y.rows(), batch = req.final_y.cols();
  const GradMask mask{req.want.theta, req.want.cond, req.want.time};
  const Layout lay{d * batch, mask.theta ? model.num_params() : 0,
                   mask.cond ? req.cond.size() : 0, mask.time ? 1 : 0};

  const std::vector<double> rhos = rho_grid(sched, req.grid);
  const double alpha_T = alpha_sigma(sched, req.grid.points.front()).alpha;
  const double alpha_0 = alpha_sigma(sched, req.grid.points.back()).alpha;

  State z = State::Zero(lay.size());
  z.head(lay.ny) = Eigen::Map<const Eigen::VectorXd>(req.final_y.data(), lay.ny);
  const Eigen::MatrixXd a_N = alpha_0 * req.dL_dx0;
  z.segment(lay.a(), lay.ny) = Eigen::Map<const Eigen::VectorXd>(a_N.data(), lay.ny);

  AdjointResult res;
  long calls = 0;
  if (mask.time) {
    const double t_N = gamma_inv(sched, rhos.back());
    const Eigen::MatrixXd F = cfg_eval(model, alpha_0 * req.final_y, scalar_time(t_N), req.cond,
                                       req.cfg);
    calls += req.cfg.network_calls();
    res.rho_end = a_N.cwiseProduct(F).sum();
    z[lay.rho()] = -res.rho_end;
  }

  Dynamics dyn = [&](const State& s, double rho, State& out) {
    const Eigen::Map<const Eigen::MatrixXd> y(s.data(), d, batch);
    const Eigen::Map<const Eigen::MatrixXd> a(s.data() + lay.a(), d, batch);
    const FieldPullback pb = field_pullback(model, sched, req.cond, req.cfg, y, rho, a, mask);
    calls += req.cfg.network_calls();
    out.resize(lay.size());
    out.head(lay.ny) = Eigen::Map<const Eigen::VectorXd>(pb.F.data(), lay.ny);
    out.segment(lay.a(), lay.ny) = -Eigen::Map<const Eigen::VectorXd>(pb.y.data(), lay.ny);
    if (lay.ntheta) out.segment(lay.theta(), lay.ntheta) = -pb.theta;
    if (lay.nc) out.segment(lay.c(), lay.nc) = -Eigen::Map<const Eigen::VectorXd>(pb.c.data(), lay.nc);
    if (lay.nrho) out[lay.rho()] = -pb.rho;
  };

  std::vector<double> back(rhos.rbegin(), rhos.rend());
  OdeProblem prob{dyn, back.front(), back.back(), lay.size()};
  SolverConfig scfg;
  scfg.kind = req.solver.kind;
  scfg.grid = std::move(back);
  scfg.rtol = req.solver.rtol;
  scfg.atol = req.solver.atol;
  Solution sol;
  try {
    sol = integrate(prob, z, scfg);
  } catch (const SolverError& e) {
    throw BackpropError(std::string("adjoint: ") + e.what(), e.clock());
  }
  const State& zf = sol.final_state;

  res.recovered_y0 = Eigen::Map<const Eigen::MatrixXd>(zf.data(), d, batch);
  res.x_T = Eigen::Map<const Eigen::MatrixXd>(zf.data() + lay.a(), d, batch) / alpha_T;
  if (lay.ntheta) res.theta = zf.segment(lay.theta(), lay.ntheta);
  if (lay.nc) res.cond = Eigen::Map<const Eigen::MatrixXd>(zf.data() + lay.c(), req.cond.rows(), req.cond.cols());
  if (lay.nrho) res.rho_start = zf[lay.rho()];
  res.stats = sol.stats;
  res.stats.nfe = calls;

  if (req.recompute_check) {
    const Eigen::MatrixXd y_N = solve_reparam_y(model, sched, res.recovered_y0, req.cond, req.cfg,
                                                rhos, req.solver);
    const double drift = (y_N - req.final_y).cwiseAbs().maxCoeff();
    res.recompute_drift = drift;
    if (drift > req.drift_tolerance) {
      std::ostringstream os;
      os << "adjoint: forward re-solve from the recovered y(rho_0) drifts by " << drift
         << " (> " << req.drift_tolerance << "); the backward reconstruction is unreliable";
      res.warnings.push_back(os.str());
    }
  }
  return res;
}

Eigen::MatrixXd cond_columns(const Eigen::MatrixXd& cond, Eigen::Index begin, Eigen::Index count) {
  return cond.cols() == 1 ? cond : Eigen::MatrixXd(cond.middleCols(begin, count));
}

}  // namespace

AdjointResult adjoint_backward(const Denoiser& model, const NoiseSchedule& sched,
                               const AdjointRequest& req) {
  sched.validate();
  check_shapes(model, req.final_y, req.dL_dx0, req.cond);
  check_grid(sched, req.grid);
  if (req.forward_grid && !(req.forward_grid->points == req.grid.points))
    throw ArgumentError("adjoint: grid does not match the forward run");

  const Eigen::Index batch = req.final_y.cols();
  const auto chunks = batch_chunks(batch, is_fixed_step(req.solver.kind));
  if (chunks.size() == 1) return adjoint_chunk(model, sched, req);

  std::vector<AdjointResult> parts(chunks.size());
  parallel_for(chunks.size(), [&](std::size_t i) {
    AdjointRequest sub = req;
    sub.final_y = req.final_y.middleCols(chunks[i].begin, chunks[i].count);
    sub.dL_dx0 = req.dL_dx0.middleCols(chunks[i].begin, chunks[i].count);
    sub.cond = cond_columns(req.cond, chunks[i].begin, chunks[i].count);
    parts[i] = adjoint_chunk(model, sched, sub);
  });
  // Reduce in chunk order so results do not depend on thread timing.
  AdjointResult out;
  const Eigen::Index d = req.final_y.rows();
  out.x_T.resize(d, batch);
  out.recovered_y0.resize(d, batch);
  if (req.want.cond) out.cond = Eigen::MatrixXd::Zero(req.cond.rows(), req.cond.cols());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& p = parts[i];
    out.x_T.middleCols(chunks[i].begin, chunks[i].count) = p.x_T;
    out.recovered_y0.middleCols(chunks[i].begin, chunks[i].count) = p.recovered_y0;
    if (req.want.theta) out.theta = i == 0 ? p.theta : Eigen::VectorXd(out.theta + p.theta);
    if (req.want.cond) {
      if (req.cond.cols() == 1)
        out.cond += p.cond;
      else
        out.cond.middleCols(chunks[i].begin, chunks[i].count) = p.cond;
    }
    out.rho_start += p.rho_start;
    out.rho_end += p.rho_end;
    out.stats.nfe = std::max(out.stats.nfe, p.stats.nfe);
    out.stats.steps_taken = std::max(out.stats.steps_taken, p.stats.steps_taken);
    out.stats.max_retained_states = std::max(out.stats.max_retained_states, p.stats.max_retained_states);
    if (p.recompute_drift)
      out.recompute_drift = std::max(out.recompute_drift.value_or(0.0), *p.recompute_drift);
    out.warnings.insert(out.warnings.end(), p.warnings.begin(), p.warnings.end());
  }
  return out;
}

long naive_backprop_calls() { return g_naive_calls.load(); }

AdjointResult naive_backprop(const Denoiser& model, const NoiseSchedule& sched,
                             const SampleRequest& fwd, const Eigen::MatrixXd& dL_dx0,
                             GradRequest want) {
  ++g_naive_calls;
  if (!is_fixed_step(fwd.solver.kind))
    throw UnsupportedError("naive_backprop: adaptive solvers have no recorded step sequence");
  if (fwd.mode != SampleMode::reparam)
    throw UnsupportedError("naive_backprop: only the reparameterized solve is supported");
  if (want.time) throw UnsupportedError("naive_backprop: clock gradients are not supported");
  sched.validate();
  check_grid(sched, fwd.grid);
  check_shapes(model, fwd.x_T, dL_dx0, fwd.cond);

  const Eigen::Index d = fwd.x_T.rows(), batch = fwd.x_T.cols();
  const GradMask mask{want.theta, want.cond, false};
  const std::vector<double> rhos = rho_grid(sched, fwd.grid);
  const double alpha_T = alpha_sigma(sched, fwd.grid.points.front()).alpha;
  const double alpha_0 = alpha_sigma(sched, fwd.grid.points.back()).alpha;
  const std::size_t N = rhos.size() - 1;

  ReparamField field(model, sched, fwd.cond, fwd.cfg, batch);
  OdeProblem prob{[&field](const State& y, double r, State& o) { field(y, r, o); }, rhos.front(),
                  rhos.back(), d * batch};
  SolverConfig scfg;
  scfg.kind = fwd.solver.kind;
  scfg.grid = rhos;
  const Eigen::MatrixXd y0 = fwd.x_T / alpha_T;
  const Trajectory traj =
      record_trajectory(prob, Eigen::Map<const Eigen::VectorXd>(y0.data(), y0.size()), scfg);
  long calls = field.network_calls();

  AdjointResult res;
  if (mask.theta) res.theta = Eigen::VectorXd::Zero(model.num_params());
  if (mask.cond) res.cond = Eigen::MatrixXd::Zero(fwd.cond.rows(), fwd.cond.cols());
  auto state = [&](std::size_t n) {
    return Eigen::Map<const Eigen::MatrixXd>(traj.states[n].data(), d, batch);
  };
  auto pull = [&](const Eigen::MatrixXd& y, double rho, const Eigen::MatrixXd& cot) {
    FieldPullback pb = field_pullback(model, sched, fwd.cond, fwd.cfg, y, rho, cot, mask);
    calls += fwd.cfg.network_calls();
    if (mask.theta) res.theta += pb.theta;
    if (mask.cond) res.cond += pb.c;
    if (!pb.y.allFinite())
      throw BackpropError("naive_backprop: non-finite cotangent at clock " + std::to_string(rho), rho);
    return pb.y;
  };

  // Reverse of one explicit RK step from node n; `extra_k0` is an additional
  // cotangent on the first stage (its value doubles as AB4 history).
  auto rk_backward = [&](const Tableau& tab, std::size_t n, Eigen::MatrixXd& ybar,
                         const Eigen::MatrixXd* extra_k0) {
    const std::size_t s = tab.b.size();
    const double rho = rhos[n], h = rhos[n + 1] - rhos[n];
    const Eigen::MatrixXd yn = state(n);
    std::vector<Eigen::MatrixXd> Y(s), k(s);
    for (std::size_t i = 0; i < s; ++i) {
      Y[i] = yn;
      for (std::size_t j = 0; j < i; ++j)
        if (tab.a[i][j] != 0.0) Y[i] += (h * tab.a[i][j]) * k[j];
      k[i] = cfg_eval(model, alpha_sigma(sched, gamma_inv(sched, rho + tab.c[i] * h)).alpha * Y[i],
                      scalar_time(gamma_inv(sched, rho + tab.c[i] * h)), fwd.cond, fwd.cfg);
      calls += fwd.cfg.network_calls();
    }
    std::vector<Eigen::MatrixXd> Ybar(s);
    Eigen::MatrixXd acc = ybar;
    for (std::size_t ii = s; ii-- > 0;) {
      Eigen::MatrixXd kbar = (h * tab.b[ii]) * ybar;
      for (std::size_t j = ii + 1; j < s; ++j)
        if (tab.a[j][ii] != 0.0) kbar += (h * tab.a[j][ii]) * Ybar[j];
      if (ii == 0 && extra_k0) kbar += *extra_k0;
      Ybar[ii] = pull(Y[ii], rho + tab.c[ii] * h, kbar);
      acc += Ybar[ii];
    }
    ybar = std::move(acc);
  };

  Eigen::MatrixXd ybar = alpha_0 * dL_dx0;
  if (fwd.solver.kind == SolverKind::ab4) {
    std::vector<Eigen::MatrixXd> Fbar(N, Eigen::MatrixXd::Zero(d, batch));
    for (std::size_t n = N - 1; n >= 3; --n) {
      const auto w = ab4_weights({rhos[n], rhos[n - 1], rhos[n - 2], rhos[n - 3]}, rhos[n + 1]);
      for (std::size_t j = 0; j < 4; ++j) Fbar[n - j] += w[j] * ybar;
      // Every later step has been reversed, so Fbar[n] is complete.
      ybar += pull(state(n), rhos[n], Fbar[n]);
    }
    for (std::size_t n = 3; n-- > 0;)
      rk_backward(tableau(SolverKind::rk4), n, ybar, &Fbar[n]);
  } else {
    const Tableau& tab = tableau(fwd.solver.kind);
    for (std::size_t n = N; n-- > 0;) rk_backward(tab, n, ybar, nullptr);
  }

  res.x_T = ybar / alpha_T;
  res.recovered_y0 = y0;
  res.stats = traj.stats;
  res.stats.nfe = calls;
  return res;
}

Loss mse_to_target(const Eigen::MatrixXd& target) {
  return {[target](const Eigen::MatrixXd& x) {
            if (x.rows() != target.rows() || x.cols() != target.cols())
              throw ArgumentError("mse_to_target: shape mismatch");
            return 0.5 * (x - target).squaredNorm();
          },
          [target](const Eigen::MatrixXd& x) -> Eigen::MatrixXd { return x - target; }};
}

Loss linear_loss(const Eigen::MatrixXd& v) {
  return {[v](const Eigen::MatrixXd& x) {
            if (x.rows() != v.rows() || x.cols() != v.cols())
              throw ArgumentError("linear_loss: shape mismatch");
            return v.cwiseProduct(x).sum();
          },
          [v](const Eigen::MatrixXd&) -> Eigen::MatrixXd { return v; }};
}

std::string to_string(GradTarget t) {
  switch (t) {
    case GradTarget::noise: return "noise";
    case GradTarget::theta: return "theta";
    case GradTarget::cond: return "cond";
    case GradTarget::time: return "time";
  }
  return "?";
}

GradTarget parse_grad_target(const std::string& s) {
  if (s == "noise") return GradTarget::noise;
  if (s == "theta") return GradTarget::theta;
  if (s == "cond") return GradTarget::cond;
  if (s == "time") return GradTarget::time;
  throw ValidationError("gradcheck.targets", "unknown gradient target '" + s + "'");
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

GradcheckReport gradcheck(const Denoiser& model, const NoiseSchedule& sched,
                          const SampleRequest& fwd, const Loss& loss, const GradcheckConfig& cfg) {
  if (fwd.mode != SampleMode::reparam) throw ArgumentError("gradcheck: forward must be reparam");
  if (!(cfg.h > 0.0)) throw ArgumentError("gradcheck: h must be positive");
  auto has = [&](GradTarget t) {
    return std::find(cfg.targets.begin(), cfg.targets.end(), t) != cfg.targets.end();
  };

  const SampleResult base = sample_reparam(model, sched, fwd);
  AdjointRequest areq;
  areq.cond = fwd.cond;
  areq.cfg = fwd.cfg;
  areq.grid = fwd.grid;
  areq.solver = fwd.solver;
  areq.final_y = base.final_y;
  areq.dL_dx0 = loss.grad(base.x0);
  areq.want = {true, has(GradTarget::theta), has(GradTarget::cond), has(GradTarget::time)};
  const AdjointResult adj = adjoint_backward(model, sched, areq);

  GradcheckReport rep;
  auto add = [&](GradTarget t, long coord, double analytic, double lp, double lm) {
    const double numeric = (lp - lm) / (2.0 * cfg.h);
    rep.rows.push_back({t, coord, analytic, numeric, relative_error(analytic, numeric)});
  };
  auto run = [&](const Denoiser& m, const SampleRequest& r) {
    return loss.value(sample_reparam(m, sched, r).x0);
  };

  for (GradTarget target : cfg.targets) {
    switch (target) {
      case GradTarget::noise:
        for (Eigen::Index i = 0; i < fwd.x_T.size(); ++i) {
          SampleRequest p = fwd, m = fwd;
          p.x_T(i) += cfg.h;
          m.x_T(i) -= cfg.h;
          add(target, i, adj.x_T(i), run(model, p), run(model, m));
        }
        break;
      case GradTarget::theta: {
        const Eigen::Index P = model.num_params();
        Rng rng(Rng::derive(cfg.seed, "gradcheck.theta"));
        std::set<Eigen::Index> picked;
        const auto want_n = std::min<Eigen::Index>(cfg.theta_coords, P);
        while (static_cast<Eigen::Index>(picked.size()) < want_n)
          picked.insert(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(P))));
        const Eigen::VectorXd theta = model.flatten();
        for (Eigen::Index i : picked) {
          Denoiser mp = model, mm = model;
          Eigen::VectorXd tp = theta, tm = theta;
          tp[i] += cfg.h;
          tm[i] -= cfg.h;
          mp.unflatten(tp);
          mm.unflatten(tm);
          add(target, i, adj.theta[i], run(mp, fwd), run(mm, fwd));
        }
        break;
      }
      case GradTarget::cond:
        for (Eigen::Index i = 0; i < fwd.cond.size(); ++i) {
          SampleRequest p = fwd, m = fwd;
          p.cond(i) += cfg.h;
          m.cond(i) -= cfg.h;
          add(target, i, adj.cond(i), run(model, p), run(model, m));
        }
        break;
      case GradTarget::time: {
        const std::vector<double> rhos = rho_grid(sched, fwd.grid);
        const double alpha_T = alpha_sigma(sched, fwd.grid.points.front()).alpha;
        const double alpha_0 = alpha_sigma(sched, fwd.grid.points.back()).alpha;
        const Eigen::MatrixXd y0 = fwd.x_T / alpha_T;
        auto shifted = [&](double delta) {
          std::vector<double> r = rhos;
          r.front() += delta;
          return loss.value(alpha_0 * solve_reparam_y(model, sched, y0, fwd.cond, fwd.cfg, r,
                                                      fwd.solver));
        };
        // rho_0 sits on the edge of the schedule's domain, so use the
        // second-order one-sided stencil looking inward.
        const double numeric =
            (3.0 * shifted(0.0) - 4.0 * shifted(-cfg.h) + shifted(-2.0 * cfg.h)) / (2.0 * cfg.h);
        rep.rows.push_back({target, 0, adj.rho_start, numeric, relative_error(adj.rho_start, numeric)});
        break;
      }
    }
  }
  for (const auto& r : rep.rows) rep.max_rel_err = std::max(rep.max_rel_err, r.rel_err);
  rep.passed = rep.max_rel_err <= cfg.tolerance;
  return rep;
}

std::string gradcheck_csv(const GradcheckReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "target,coordinate,analytic,numeric,rel_err\n";
  for (const auto& r : report.rows)
    os << to_string(r.target) << ',' << r.coordinate << ',' << r.analytic << ',' << r.numeric
       << ',' << r.rel_err << '\n';
  return os.str();
}

}  // namespace adjd
