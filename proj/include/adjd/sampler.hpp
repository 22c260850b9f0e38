#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adjd/denoiser.hpp"
#include "adjd/odeint.hpp"
#include "adjd/schedule.hpp"

namespace adjd {

class Rng;

enum class SampleMode { original, reparam };

std::string to_string(SampleMode m);
SampleMode parse_sample_mode(const std::string& s);

struct SolverSpec {
  SolverKind kind = SolverKind::rk4;
  double rtol = 1e-6;
  double atol = 1e-8;

  bool operator==(const SolverSpec&) const = default;
};

/// Generation request for a batch of chains (columns of x_T).
struct SampleRequest {
  Eigen::MatrixXd x_T;   // d x B
  Eigen::MatrixXd cond;  // cond_dim x 1 (shared) or cond_dim x B
  CfgConfig cfg;
  TimeGrid grid;         // t_end -> t_start
  SolverSpec solver;
  SampleMode mode = SampleMode::reparam;
};

struct SampleResult {
  Eigen::MatrixXd x0;       // d x B, generated samples at t_start
  Eigen::MatrixXd final_y;  // reparameterized state y = x / alpha at t_start
  TimeGrid grid;
  SampleMode mode = SampleMode::reparam;
  SolveStats stats;         // nfe counts individual network evaluations
};

/// x_T ~ N(0, sigma_T^2 I).
Eigen::MatrixXd draw_initial_noise(const NoiseSchedule& sched, Eigen::Index dim,
                                   Eigen::Index batch, Rng& rng);

/// rho_i = gamma(t_i) for every grid node.
std::vector<double> rho_grid(const NoiseSchedule& sched, const TimeGrid& grid);

/// Right-hand side of dy/drho = eps~(alpha(t) y, t, c), t = gamma^-1(rho), on
/// a flattened d x B state. Counts network evaluations.
class ReparamField {
 public:
  ReparamField(const Denoiser& model, const NoiseSchedule& sched, const Eigen::MatrixXd& cond,
               const CfgConfig& cfg, Eigen::Index batch);
  void operator()(const State& y, double rho, State& out);
  long network_calls() const { return calls_; }

 private:
  const Denoiser& model_;
  const NoiseSchedule& sched_;
  const Eigen::MatrixXd& cond_;
  CfgConfig cfg_;
  Eigen::Index batch_;
  long calls_ = 0;
};

/// Original probability-flow field dx/dt = f(t) x + g^2(t)/(2 sigma_t) eps~(x, t, c).
class OriginalField {
 public:
  OriginalField(const Denoiser& model, const NoiseSchedule& sched, const Eigen::MatrixXd& cond,
                const CfgConfig& cfg, Eigen::Index batch);
  void operator()(const State& x, double t, State& out);
  long network_calls() const { return calls_; }

 private:
  const Denoiser& model_;
  const NoiseSchedule& sched_;
  const Eigen::MatrixXd& cond_;
  CfgConfig cfg_;
  Eigen::Index batch_;
  long calls_ = 0;
};

SampleResult sample_original(const Denoiser& model, const NoiseSchedule& sched,
                             const SampleRequest& req);
SampleResult sample_reparam(const Denoiser& model, const NoiseSchedule& sched,
                            const SampleRequest& req);
/// Dispatches on req.mode.
SampleResult sample(const Denoiser& model, const NoiseSchedule& sched, const SampleRequest& req);

/// Solves the reparameterized ODE on an explicit rho grid starting from y0.
/// Returns the terminal y. Used by finite-difference checks of the clock.
Eigen::MatrixXd solve_reparam_y(const Denoiser& model, const NoiseSchedule& sched,
                                const Eigen::MatrixXd& y0, const Eigen::MatrixXd& cond,
                                const CfgConfig& cfg, const std::vector<double>& rhos,
                                const SolverSpec& solver, SolveStats* stats = nullptr);

/// States at every grid node, mapped to x-space (x = alpha_t y for reparam).
struct SampleTrajectory {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> x;
  SolveStats stats;
};
SampleTrajectory record_sample(const Denoiser& model, const NoiseSchedule& sched,
                               const SampleRequest& req);

struct ErrorRow {
  SampleMode mode;
  long nfe;
  double mean_l2;
  double std_l2;
};

/// Fixed-step count that spends `nfe` dynamics evaluations with `kind`
/// (ab4 pays 12 evaluations for its three RK4 startup steps).
std::size_t steps_for_nfe(SolverKind kind, long nfe);

struct ErrorStudy {
  Eigen::MatrixXd noise;     // d x B starting points
  Eigen::MatrixXd cond;
  CfgConfig cfg;
  GridScheme scheme = GridScheme::uniform;
  SolverKind solver = SolverKind::euler;
  std::vector<long> nfe_list{10, 20, 50};
  std::vector<SampleMode> modes{SampleMode::original, SampleMode::reparam};
  long reference_nfe = 1000;  // reparam + rk4
};

/// Mean / std over chains of ||x0(mode, nfe) - x0(reference)||_2.
std::vector<ErrorRow> solver_error_vs_reference(const Denoiser& model,
                                                const NoiseSchedule& sched,
                                                const ErrorStudy& study);

std::string error_table_csv(const std::vector<ErrorRow>& rows);

}  // namespace adjd
