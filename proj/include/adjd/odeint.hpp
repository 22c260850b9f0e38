#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace adjd {

using State = Eigen::VectorXd;

/// Writes dy/dclock at (y, clock) into `out` (already sized like y).
using Dynamics = std::function<void(const State& y, double clock, State& out)>;

enum class SolverKind { euler, heun, rk4, ab4, adaptive_rk45 };

std::string to_string(SolverKind k);
SolverKind parse_solver_kind(const std::string& s);
bool is_fixed_step(SolverKind k);
/// Dynamics evaluations per step for the one-step fixed kinds (ab4: 1 after startup).
int stages_per_step(SolverKind k);

struct OdeProblem {
  Dynamics dynamics;
  double clock_start = 0.0;
  double clock_end = 1.0;
  Eigen::Index state_dim = 0;
};

struct SolverConfig {
  SolverKind kind = SolverKind::rk4;
  /// Clock points from clock_start to clock_end (fixed-step kinds). The
  /// adaptive kind only uses the endpoints.
  std::vector<double> grid;
  double rtol = 1e-6;
  double atol = 1e-8;
};

struct SolveStats {
  long nfe = 0;
  long max_retained_states = 0;  // peak count of live state-sized vectors
  long steps_taken = 0;
};

struct Solution {
  State final_state;
  SolveStats stats;
};

struct Trajectory {
  std::vector<double> clocks;
  std::vector<State> states;
  SolveStats stats;
};

/// Explicit Runge-Kutta tableau (strictly lower-triangular `a`).
struct Tableau {
  std::vector<std::vector<double>> a;
  std::vector<double> b;
  std::vector<double> c;
};

/// Tableau for euler / heun / rk4.
const Tableau& tableau(SolverKind k);

/// Adams-Bashforth weights for a step to `next` from the four most recent
/// nodes `nodes[0]` (newest) .. `nodes[3]` on a possibly non-uniform grid:
/// y_next = y_0 + sum_j w_j F(nodes[j]).
std::array<double, 4> ab4_weights(const std::array<double, 4>& nodes, double next);

Solution integrate(const OdeProblem& problem, const State& y0, const SolverConfig& cfg);
Trajectory record_trajectory(const OdeProblem& problem, const State& y0, const SolverConfig& cfg);

}  // namespace adjd
