#include "adjd/odeint.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

#include "adjd/errors.hpp"

namespace adjd {
namespace {

// Counts live state-sized buffers; `peak` feeds SolveStats::max_retained_states.
struct Tracker {
  long live = 0;
  long peak = 0;
};

class Buffer {
 public:
  Buffer(Tracker& tr, Eigen::Index n) : tr_(&tr), v(State::Zero(n)) {
    ++tr_->live;
    tr_->peak = std::max(tr_->peak, tr_->live);
  }
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;
  ~Buffer() { --tr_->live; }

 private:
  Tracker* tr_;

 public:
  State v;
};

using Observer = std::function<void(double clock, const State& y)>;

class Evaluator {
 public:
  Evaluator(const OdeProblem& p, SolveStats& stats) : p_(p), stats_(stats) {}
  void operator()(const State& y, double clock, State& out) {
    p_.dynamics(y, clock, out);
    ++stats_.nfe;
    if (out.size() != y.size())
      throw ArgumentError("ode: dynamics returned a derivative of the wrong size");
    if (!out.allFinite())
      throw SolverError("ode: non-finite derivative at clock " + std::to_string(clock), clock);
  }

 private:
  const OdeProblem& p_;
  SolveStats& stats_;
};

void check_grid(const OdeProblem& p, const SolverConfig& cfg) {
  const auto& g = cfg.grid;
  if (g.size() < 2) throw ArgumentError("ode: fixed-step solvers need at least one step");
  if (cfg.kind == SolverKind::ab4 && g.size() < 5)
    throw ArgumentError("ode: ab4 needs at least four steps");
  const double span = std::abs(p.clock_end - p.clock_start);
  const double tol = 1e-12 * std::max(1.0, span);
  if (std::abs(g.front() - p.clock_start) > tol || std::abs(g.back() - p.clock_end) > tol)
    throw ArgumentError("ode: grid endpoints do not match the problem clock range");
  const double dir = p.clock_end >= p.clock_start ? 1.0 : -1.0;
  for (std::size_t i = 1; i < g.size(); ++i)
    if (!((g[i] - g[i - 1]) * dir > 0.0))
      throw ArgumentError("ode: grid must be strictly monotone toward clock_end");
}

void check_state(const State& y, double clock) {
  if (!y.allFinite())
    throw SolverError("ode: non-finite state at clock " + std::to_string(clock), clock);
}

State run_rk(const OdeProblem& p, const State& y0, const SolverConfig& cfg, SolveStats& stats,
             const Observer& observe) {
  const Tableau& tab = tableau(cfg.kind);
  const std::size_t s = tab.b.size();
  const Eigen::Index n = y0.size();
  Tracker tr;
  Evaluator eval(p, stats);
  Buffer y(tr, n);
  y.v = y0;
  std::vector<std::unique_ptr<Buffer>> k;
  for (std::size_t i = 0; i < s; ++i) k.push_back(std::make_unique<Buffer>(tr, n));
  std::optional<Buffer> stage;
  if (s > 1) stage.emplace(tr, n);

  if (observe) observe(cfg.grid.front(), y.v);
  for (std::size_t step = 0; step + 1 < cfg.grid.size(); ++step) {
    const double tau = cfg.grid[step];
    const double h = cfg.grid[step + 1] - tau;
    for (std::size_t i = 0; i < s; ++i) {
      if (i == 0) {
        eval(y.v, tau, k[0]->v);
        continue;
      }
      stage->v = y.v;
      for (std::size_t j = 0; j < i; ++j)
        if (tab.a[i][j] != 0.0) stage->v += (h * tab.a[i][j]) * k[j]->v;
      eval(stage->v, tau + tab.c[i] * h, k[i]->v);
    }
    for (std::size_t i = 0; i < s; ++i)
      if (tab.b[i] != 0.0) y.v += (h * tab.b[i]) * k[i]->v;
    ++stats.steps_taken;
    check_state(y.v, cfg.grid[step + 1]);
    if (observe) observe(cfg.grid[step + 1], y.v);
  }
  stats.max_retained_states = std::max(stats.max_retained_states, tr.peak);
  return y.v;
}

State run_ab4(const OdeProblem& p, const State& y0, const SolverConfig& cfg, SolveStats& stats,
              const Observer& observe) {
  const Eigen::Index n = y0.size();
  const auto& g = cfg.grid;
  Tracker tr;
  Evaluator eval(p, stats);
  Buffer y(tr, n);
  y.v = y0;
  Buffer tmp(tr, n);
  // hist[j] holds F at grid node (step - j); filled lazily during startup.
  std::array<std::unique_ptr<Buffer>, 4> hist;
  if (observe) observe(g.front(), y.v);

  // RK4 startup on the first three intervals; k1 of each doubles as history.
  {
    const Tableau& rk = tableau(SolverKind::rk4);
    std::array<std::unique_ptr<Buffer>, 3> k;
    for (auto& kk : k) kk = std::make_unique<Buffer>(tr, n);
    for (std::size_t step = 0; step < 3; ++step) {
      std::rotate(hist.rbegin(), hist.rbegin() + 1, hist.rend());
      hist[0] = std::make_unique<Buffer>(tr, n);
      const double tau = g[step];
      const double h = g[step + 1] - tau;
      eval(y.v, tau, hist[0]->v);
      const State* ks[4] = {&hist[0]->v, &k[0]->v, &k[1]->v, &k[2]->v};
      for (std::size_t i = 1; i < 4; ++i) {
        tmp.v = y.v;
        for (std::size_t j = 0; j < i; ++j)
          if (rk.a[i][j] != 0.0) tmp.v += (h * rk.a[i][j]) * *ks[j];
        eval(tmp.v, tau + rk.c[i] * h, k[i - 1]->v);
      }
      for (std::size_t i = 0; i < 4; ++i) y.v += (h * rk.b[i]) * *ks[i];
      ++stats.steps_taken;
      check_state(y.v, g[step + 1]);
      if (observe) observe(g[step + 1], y.v);
    }
  }

  for (std::size_t step = 3; step + 1 < g.size(); ++step) {
    // Recycle the oldest history buffer for the newest derivative.
    std::rotate(hist.rbegin(), hist.rbegin() + 1, hist.rend());
    if (!hist[0]) hist[0] = std::make_unique<Buffer>(tr, n);
    eval(y.v, g[step], hist[0]->v);
    const auto w = ab4_weights({g[step], g[step - 1], g[step - 2], g[step - 3]}, g[step + 1]);
    for (std::size_t j = 0; j < 4; ++j) y.v += w[j] * hist[j]->v;
    ++stats.steps_taken;
    check_state(y.v, g[step + 1]);
    if (observe) observe(g[step + 1], y.v);
  }
  stats.max_retained_states = std::max(stats.max_retained_states, tr.peak);
  return y.v;
}

// Dormand-Prince 5(4) with PI step control.
State run_rk45(const OdeProblem& p, const State& y0, const SolverConfig& cfg, SolveStats& stats,
               const Observer& observe) {
  static constexpr double c[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static constexpr double a[7][6] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  // Fifth-order weights equal a[6]; e = b5 - b4.
  static constexpr double e[7] = {71.0 / 57600,      0.0, -71.0 / 16695, 71.0 / 1920,
                                  -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
  constexpr double kSafety = 0.9, kMinFac = 0.2, kMaxFac = 5.0;
  constexpr double kBeta1 = 0.7 / 5.0, kBeta2 = 0.4 / 5.0;

  const Eigen::Index n = y0.size();
  const double t0 = p.clock_start, t1 = p.clock_end;
  const double span = std::abs(t1 - t0);
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  Tracker tr;
  Evaluator eval(p, stats);
  Buffer y(tr, n);
  y.v = y0;
  std::array<std::unique_ptr<Buffer>, 7> k;
  for (auto& kk : k) kk = std::make_unique<Buffer>(tr, n);
  Buffer stage(tr, n);
  Buffer ynew(tr, n);

  auto scale = [&](const State& u, const State& v) {
    return (cfg.atol + cfg.rtol * u.cwiseAbs().cwiseMax(v.cwiseAbs()).array()).matrix();
  };
  auto rms = [n](const Eigen::VectorXd& v) {
    return n > 0 ? std::sqrt(v.squaredNorm() / static_cast<double>(n)) : 0.0;
  };

  if (observe) observe(t0, y.v);
  if (span == 0.0) return y.v;

  // Initial step heuristic (Hairer, Norsett & Wanner II.4).
  eval(y.v, t0, k[0]->v);
  double h;
  {
    const Eigen::VectorXd sc = scale(y.v, y.v);
    const double d0 = rms(y.v.cwiseQuotient(sc));
    const double d1 = rms(k[0]->v.cwiseQuotient(sc));
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    stage.v = y.v + dir * h0 * k[0]->v;
    eval(stage.v, t0 + dir * h0, k[1]->v);
    const double d2 = rms((k[1]->v - k[0]->v).cwiseQuotient(sc)) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    h = std::min({100.0 * h0, h1, span});
  }

  double t = t0;
  double err_prev = 1e-4;
  bool last_rejected = false;
  while (dir * (t1 - t) > 0.0) {
    if (h < 1e-12 * span)
      throw StiffnessError("ode: adaptive step underflow at clock " + std::to_string(t), t);
    const bool final_step = h >= std::abs(t1 - t);
    const double hs = final_step ? (t1 - t) : dir * h;
    for (int i = 1; i < 7; ++i) {
      stage.v = y.v;
      for (int j = 0; j < i; ++j)
        if (a[i][j] != 0.0) stage.v += (hs * a[i][j]) * k[j]->v;
      eval(stage.v, t + c[i] * hs, k[i]->v);
    }
    ynew.v = stage.v;  // stage 7 argument is the fifth-order solution
    Eigen::VectorXd err = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < 7; ++i)
      if (e[i] != 0.0) err += (hs * e[i]) * k[i]->v;
    const double en = rms(err.cwiseQuotient(scale(y.v, ynew.v)));
    if (!std::isfinite(en))
      throw SolverError("ode: non-finite error estimate at clock " + std::to_string(t), t);

    if (en <= 1.0) {
      t = final_step ? t1 : t + hs;
      y.v = ynew.v;
      k[0]->v = k[6]->v;  // first-same-as-last
      ++stats.steps_taken;
      check_state(y.v, t);
      if (observe) observe(t, y.v);
      const double enc = std::max(en, 1e-10);
      double fac = kSafety * std::pow(enc, -kBeta1) * std::pow(err_prev, kBeta2);
      fac = std::clamp(fac, kMinFac, last_rejected ? 1.0 : kMaxFac);
      h *= fac;
      err_prev = enc;
      last_rejected = false;
    } else {
      h *= std::max(kMinFac, kSafety * std::pow(en, -1.0 / 5.0));
      last_rejected = true;
    }
  }
  stats.max_retained_states = std::max(stats.max_retained_states, tr.peak);
  return y.v;
}

State run(const OdeProblem& p, const State& y0, const SolverConfig& cfg, SolveStats& stats,
          const Observer& observe) {
  if (y0.size() != p.state_dim)
    throw ArgumentError("ode: initial state has size " + std::to_string(y0.size()) +
                        ", problem expects " + std::to_string(p.state_dim));
  check_state(y0, p.clock_start);
  if (!p.dynamics) throw ArgumentError("ode: missing dynamics");
  switch (cfg.kind) {
    case SolverKind::euler:
    case SolverKind::heun:
    case SolverKind::rk4:
      check_grid(p, cfg);
      return run_rk(p, y0, cfg, stats, observe);
    case SolverKind::ab4:
      check_grid(p, cfg);
      return run_ab4(p, y0, cfg, stats, observe);
    case SolverKind::adaptive_rk45:
      if (!(cfg.rtol > 0.0) || !(cfg.atol >= 0.0))
        throw ArgumentError("ode: adaptive solver needs rtol > 0 and atol >= 0");
      return run_rk45(p, y0, cfg, stats, observe);
  }
  throw ArgumentError("ode: unknown solver kind");
}

}  // namespace

std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::euler: return "euler";
    case SolverKind::heun: return "heun";
    case SolverKind::rk4: return "rk4";
    case SolverKind::ab4: return "ab4";
    case SolverKind::adaptive_rk45: return "adaptive_rk45";
  }
  return "?";
}

SolverKind parse_solver_kind(const std::string& s) {
  if (s == "euler") return SolverKind::euler;
  if (s == "heun") return SolverKind::heun;
  if (s == "rk4") return SolverKind::rk4;
  if (s == "ab4") return SolverKind::ab4;
  if (s == "adaptive_rk45") return SolverKind::adaptive_rk45;
  throw ValidationError("solver.kind", "unknown solver kind '" + s + "'");
}

bool is_fixed_step(SolverKind k) { return k != SolverKind::adaptive_rk45; }

int stages_per_step(SolverKind k) {
  switch (k) {
    case SolverKind::euler: return 1;
    case SolverKind::heun: return 2;
    case SolverKind::rk4: return 4;
    case SolverKind::ab4: return 1;
    case SolverKind::adaptive_rk45: return 6;
  }
  return 1;
}

const Tableau& tableau(SolverKind k) {
  static const Tableau euler{{{}}, {1.0}, {0.0}};
  static const Tableau heun{{{}, {1.0}}, {0.5, 0.5}, {0.0, 1.0}};
  static const Tableau rk4{{{}, {0.5}, {0.0, 0.5}, {0.0, 0.0, 1.0}},
                           {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6},
                           {0.0, 0.5, 0.5, 1.0}};
  switch (k) {
    case SolverKind::euler: return euler;
    case SolverKind::heun: return heun;
    case SolverKind::rk4: return rk4;
    default: throw ArgumentError("tableau: " + to_string(k) + " is not a one-step RK kind");
  }
}

std::array<double, 4> ab4_weights(const std::array<double, 4>& nodes, double next) {
  // Integrate each Lagrange basis polynomial (cubic) over [nodes[0], next]
  // with two-point Gauss-Legendre, which is exact for cubics.
  const double mid = 0.5 * (nodes[0] + next);
  const double half = 0.5 * (next - nodes[0]);
  const double off = half / std::sqrt(3.0);
  const double q[2] = {mid - off, mid + off};
  std::array<double, 4> w{};
  for (std::size_t j = 0; j < 4; ++j) {
    double acc = 0.0;
    for (double s : q) {
      double l = 1.0;
      for (std::size_t m = 0; m < 4; ++m)
        if (m != j) l *= (s - nodes[m]) / (nodes[j] - nodes[m]);
      acc += l;
    }
    w[j] = half * acc;
  }
  return w;
}

Solution integrate(const OdeProblem& problem, const State& y0, const SolverConfig& cfg) {
  Solution sol;
  sol.final_state = run(problem, y0, cfg, sol.stats, nullptr);
  return sol;
}

Trajectory record_trajectory(const OdeProblem& problem, const State& y0, const SolverConfig& cfg) {
  Trajectory traj;
  SolveStats stats;
  run(problem, y0, cfg, stats, [&](double clock, const State& y) {
    traj.clocks.push_back(clock);
    traj.states.push_back(y);
  });
  stats.max_retained_states = static_cast<long>(traj.states.size());
  traj.stats = stats;
  return traj;
}

}  // namespace adjd
