#include "adjd/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "adjd/errors.hpp"
#include "adjd/parallel.hpp"
#include "adjd/rng.hpp"

namespace adjd {
namespace {

Eigen::RowVectorXd scalar_time(double t) {
  Eigen::RowVectorXd tt(1);
  tt[0] = t;
  return tt;
}

void check_request(const Denoiser& model, const NoiseSchedule& sched, const SampleRequest& req) {
  sched.validate();
  if (req.x_T.rows() != model.state_dim() || req.x_T.cols() < 1)
    throw ArgumentError("sample: x_T must be state_dim x batch with batch >= 1");
  if (!req.x_T.allFinite()) throw DataError("sample: x_T is not finite");
  if (req.cond.rows() != model.cond_dim() ||
      (req.cond.cols() != 1 && req.cond.cols() != req.x_T.cols()))
    throw ArgumentError("sample: condition must be cond_dim x 1 or cond_dim x batch");
  const auto& p = req.grid.points;
  if (p.size() < 2) throw ArgumentError("sample: grid needs at least one step");
  if (std::abs(p.front() - sched.t_end) > 1e-12 || std::abs(p.back() - sched.t_start) > 1e-12)
    throw ArgumentError("sample: grid must run from t_end to t_start");
  for (std::size_t i = 1; i < p.size(); ++i)
    if (!(p[i] < p[i - 1])) throw ArgumentError("sample: grid must be strictly decreasing");
}

SolverConfig make_solver(const SolverSpec& spec, std::vector<double> grid) {
  SolverConfig cfg;
  cfg.kind = spec.kind;
  cfg.grid = std::move(grid);
  cfg.rtol = spec.rtol;
  cfg.atol = spec.atol;
  return cfg;
}

Eigen::MatrixXd cond_columns(const Eigen::MatrixXd& cond, Eigen::Index begin, Eigen::Index count) {
  return cond.cols() == 1 ? cond : Eigen::MatrixXd(cond.middleCols(begin, count));
}

// Splits the batch across ADJD_THREADS workers for fixed-step solvers and
// stitches results back in chain order.
template <typename Solve>
SampleResult run_chunked(const SampleRequest& req, Solve&& solve) {
  const Eigen::Index batch = req.x_T.cols();
  const auto chunks = batch_chunks(batch, is_fixed_step(req.solver.kind));
  if (chunks.size() == 1) return solve(req);
  std::vector<SampleResult> parts(chunks.size());
  parallel_for(chunks.size(), [&](std::size_t i) {
    SampleRequest sub = req;
    sub.x_T = req.x_T.middleCols(chunks[i].begin, chunks[i].count);
    sub.cond = cond_columns(req.cond, chunks[i].begin, chunks[i].count);
    parts[i] = solve(sub);
  });
  SampleResult out;
  out.x0.resize(req.x_T.rows(), batch);
  out.final_y.resize(req.x_T.rows(), batch);
  out.grid = req.grid;
  out.mode = req.mode;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    out.x0.middleCols(chunks[i].begin, chunks[i].count) = parts[i].x0;
    out.final_y.middleCols(chunks[i].begin, chunks[i].count) = parts[i].final_y;
    out.stats.nfe = std::max(out.stats.nfe, parts[i].stats.nfe);  // chunks are one batched call
    out.stats.steps_taken = std::max(out.stats.steps_taken, parts[i].stats.steps_taken);
    out.stats.max_retained_states =
        std::max(out.stats.max_retained_states, parts[i].stats.max_retained_states);
  }
  return out;
}

}  // namespace

std::string to_string(SampleMode m) { return m == SampleMode::original ? "original" : "reparam"; }

SampleMode parse_sample_mode(const std::string& s) {
  if (s == "original") return SampleMode::original;
  if (s == "reparam") return SampleMode::reparam;
  throw ValidationError("solver.mode", "unknown sampling mode '" + s + "'");
}

Eigen::MatrixXd draw_initial_noise(const NoiseSchedule& sched, Eigen::Index dim,
                                   Eigen::Index batch, Rng& rng) {
  return rng.normal_matrix(dim, batch, alpha_sigma(sched, sched.t_end).sigma);
}

std::vector<double> rho_grid(const NoiseSchedule& sched, const TimeGrid& grid) {
  std::vector<double> rhos;
  rhos.reserve(grid.points.size());
  for (double t : grid.points) rhos.push_back(gamma(sched, t));
  return rhos;
}

ReparamField::ReparamField(const Denoiser& model, const NoiseSchedule& sched,
                           const Eigen::MatrixXd& cond, const CfgConfig& cfg, Eigen::Index batch)
    : model_(model), sched_(sched), cond_(cond), cfg_(cfg), batch_(batch) {}

void ReparamField::operator()(const State& y, double rho, State& out) {
  const double t = gamma_inv(sched_, rho);
  const double alpha = alpha_sigma(sched_, t).alpha;
  const Eigen::Index d = model_.state_dim();
  const Eigen::MatrixXd x = alpha * Eigen::Map<const Eigen::MatrixXd>(y.data(), d, batch_);
  const Eigen::MatrixXd e = cfg_eval(model_, x, scalar_time(t), cond_, cfg_);
  calls_ += cfg_.network_calls();
  out = Eigen::Map<const Eigen::VectorXd>(e.data(), e.size());
}

OriginalField::OriginalField(const Denoiser& model, const NoiseSchedule& sched,
                             const Eigen::MatrixXd& cond, const CfgConfig& cfg, Eigen::Index batch)
    : model_(model), sched_(sched), cond_(cond), cfg_(cfg), batch_(batch) {}

void OriginalField::operator()(const State& xs, double t, State& out) {
  const auto [f, g2] = drift_diffusion(sched_, t);
  const double sigma = alpha_sigma(sched_, t).sigma;
  const Eigen::Index d = model_.state_dim();
  const Eigen::Map<const Eigen::MatrixXd> x(xs.data(), d, batch_);
  const Eigen::MatrixXd e = cfg_eval(model_, x, scalar_time(t), cond_, cfg_);
  calls_ += cfg_.network_calls();
  out = f * xs + (g2 / (2.0 * sigma)) * Eigen::Map<const Eigen::VectorXd>(e.data(), e.size());
}

Eigen::MatrixXd solve_reparam_y(const Denoiser& model, const NoiseSchedule& sched,
                                const Eigen::MatrixXd& y0, const Eigen::MatrixXd& cond,
                                const CfgConfig& cfg, const std::vector<double>& rhos,
                                const SolverSpec& solver, SolveStats* stats) {
  const Eigen::Index d = y0.rows(), batch = y0.cols();
  ReparamField field(model, sched, cond, cfg, batch);
  OdeProblem prob{[&field](const State& y, double r, State& o) { field(y, r, o); }, rhos.front(),
                  rhos.back(), d * batch};
  Solution sol;
  try {
    sol = integrate(prob, Eigen::Map<const Eigen::VectorXd>(y0.data(), y0.size()),
                    make_solver(solver, rhos));
  } catch (const SolverError& e) {
    throw SolverError(std::string("forward-reparam: ") + e.what(), e.clock());
  }
  if (stats) {
    *stats = sol.stats;
    stats->nfe = field.network_calls();
  }
  return Eigen::Map<const Eigen::MatrixXd>(sol.final_state.data(), d, batch);
}

SampleResult sample_reparam(const Denoiser& model, const NoiseSchedule& sched,
                            const SampleRequest& req) {
  check_request(model, sched, req);
  if (req.mode != SampleMode::reparam) throw ArgumentError("sample_reparam: mode must be reparam");
  return run_chunked(req, [&](const SampleRequest& r) {
    const double alpha_T = alpha_sigma(sched, r.grid.points.front()).alpha;
    const double alpha_0 = alpha_sigma(sched, r.grid.points.back()).alpha;
    SampleResult out;
    out.grid = r.grid;
    out.mode = SampleMode::reparam;
    out.final_y = solve_reparam_y(model, sched, r.x_T / alpha_T, r.cond, r.cfg,
                                  rho_grid(sched, r.grid), r.solver, &out.stats);
    out.x0 = alpha_0 * out.final_y;
    return out;
  });
}

SampleResult sample_original(const Denoiser& model, const NoiseSchedule& sched,
                             const SampleRequest& req) {
  check_request(model, sched, req);
  if (req.mode != SampleMode::original)
    throw ArgumentError("sample_original: mode must be original");
  return run_chunked(req, [&](const SampleRequest& r) {
    const Eigen::Index d = r.x_T.rows(), batch = r.x_T.cols();
    OriginalField field(model, sched, r.cond, r.cfg, batch);
    OdeProblem prob{[&field](const State& x, double t, State& o) { field(x, t, o); },
                    r.grid.points.front(), r.grid.points.back(), d * batch};
    Solution sol;
    try {
      sol = integrate(prob, Eigen::Map<const Eigen::VectorXd>(r.x_T.data(), r.x_T.size()),
                      make_solver(r.solver, r.grid.points));
    } catch (const SolverError& e) {
      throw SolverError(std::string("forward-original: ") + e.what(), e.clock());
    }
    SampleResult out;
    out.grid = r.grid;
    out.mode = SampleMode::original;
    out.stats = sol.stats;
    out.stats.nfe = field.network_calls();
    out.x0 = Eigen::Map<const Eigen::MatrixXd>(sol.final_state.data(), d, batch);
    out.final_y = out.x0 / alpha_sigma(sched, r.grid.points.back()).alpha;
    return out;
  });
}

SampleResult sample(const Denoiser& model, const NoiseSchedule& sched, const SampleRequest& req) {
  return req.mode == SampleMode::reparam ? sample_reparam(model, sched, req)
                                         : sample_original(model, sched, req);
}

SampleTrajectory record_sample(const Denoiser& model, const NoiseSchedule& sched,
                               const SampleRequest& req) {
  check_request(model, sched, req);
  const Eigen::Index d = req.x_T.rows(), batch = req.x_T.cols();
  SampleTrajectory out;
  Trajectory traj;
  long calls = 0;
  if (req.mode == SampleMode::reparam) {
    ReparamField field(model, sched, req.cond, req.cfg, batch);
    OdeProblem prob{[&field](const State& y, double r, State& o) { field(y, r, o); }, 0.0, 0.0,
                    d * batch};
    const auto rhos = rho_grid(sched, req.grid);
    prob.clock_start = rhos.front();
    prob.clock_end = rhos.back();
    const double alpha_T = alpha_sigma(sched, req.grid.points.front()).alpha;
    const Eigen::MatrixXd y0 = req.x_T / alpha_T;
    traj = record_trajectory(prob, Eigen::Map<const Eigen::VectorXd>(y0.data(), y0.size()),
                             make_solver(req.solver, rhos));
    calls = field.network_calls();
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
      const double t = gamma_inv(sched, traj.clocks[i]);
      out.times.push_back(t);
      out.x.push_back(alpha_sigma(sched, t).alpha *
                      Eigen::Map<const Eigen::MatrixXd>(traj.states[i].data(), d, batch));
    }
  } else {
    OriginalField field(model, sched, req.cond, req.cfg, batch);
    OdeProblem prob{[&field](const State& x, double t, State& o) { field(x, t, o); },
                    req.grid.points.front(), req.grid.points.back(), d * batch};
    traj = record_trajectory(prob, Eigen::Map<const Eigen::VectorXd>(req.x_T.data(), req.x_T.size()),
                             make_solver(req.solver, req.grid.points));
    calls = field.network_calls();
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
      out.times.push_back(traj.clocks[i]);
      out.x.push_back(Eigen::Map<const Eigen::MatrixXd>(traj.states[i].data(), d, batch));
    }
  }
  out.stats = traj.stats;
  out.stats.nfe = calls;
  return out;
}

std::size_t steps_for_nfe(SolverKind kind, long nfe) {
  if (nfe < 1) throw ArgumentError("steps_for_nfe: nfe must be >= 1");
  long steps = 0;
  switch (kind) {
    case SolverKind::euler: steps = nfe; break;
    case SolverKind::heun: steps = nfe / 2; break;
    case SolverKind::rk4: steps = nfe / 4; break;
    case SolverKind::ab4: steps = nfe - 9; break;  // 3 RK4 steps = 12 evals, then 1 per step
    case SolverKind::adaptive_rk45:
      throw ArgumentError("steps_for_nfe: adaptive solver has no fixed NFE budget");
  }
  const long min_steps = kind == SolverKind::ab4 ? 4 : 1;
  if (steps < min_steps)
    throw ArgumentError("steps_for_nfe: nfe=" + std::to_string(nfe) + " too small for " +
                        to_string(kind));
  return static_cast<std::size_t>(steps);
}

std::vector<ErrorRow> solver_error_vs_reference(const Denoiser& model,
                                                const NoiseSchedule& sched,
                                                const ErrorStudy& study) {
  SampleRequest ref;
  ref.x_T = study.noise;
  ref.cond = study.cond;
  ref.cfg = study.cfg;
  ref.grid = time_grid(sched, steps_for_nfe(SolverKind::rk4, study.reference_nfe), study.scheme);
  ref.solver.kind = SolverKind::rk4;
  ref.mode = SampleMode::reparam;
  const Eigen::MatrixXd reference = sample(model, sched, ref).x0;

  std::vector<ErrorRow> rows;
  for (SampleMode mode : study.modes) {
    for (long nfe : study.nfe_list) {
      SampleRequest req = ref;
      req.mode = mode;
      req.solver.kind = study.solver;
      req.grid = time_grid(sched, steps_for_nfe(study.solver, nfe), study.scheme);
      const Eigen::MatrixXd x0 = sample(model, sched, req).x0;
      const Eigen::VectorXd dist = (x0 - reference).colwise().norm().transpose();
      const double mean = dist.mean();
      const double var = dist.size() > 1
                             ? (dist.array() - mean).square().sum() / static_cast<double>(dist.size() - 1)
                             : 0.0;
      rows.push_back({mode, nfe, mean, std::sqrt(var)});
    }
  }
  return rows;
}

std::string error_table_csv(const std::vector<ErrorRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "mode,nfe,mean_l2,std_l2\n";
  for (const auto& r : rows)
    os << to_string(r.mode) << ',' << r.nfe << ',' << r.mean_l2 << ',' << r.std_l2 << '\n';
  return os.str();
}

}  // namespace adjd
