#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adjd/denoiser.hpp"
#include "adjd/odeint.hpp"
#include "adjd/sampler.hpp"
#include "adjd/schedule.hpp"

namespace adjd {

/// Which gradients to produce. The x_T gradient is always computed since the
/// state adjoint drives everything else.
struct GradRequest {
  bool noise = true;
  bool theta = true;
  bool cond = true;
  bool time = false;
};

// Seeding: the forward solve ends at y_N with x_0 = alpha(t_start) y_N, so
// dL/dy_N = alpha(t_start) dL/dx_0. At the other end y_0 = x_T / alpha(T),
// so dL/dx_T = a_y(rho_0) / alpha(T). Clock gradients are with respect to the
// rho grid endpoints holding y_0 fixed.
struct AdjointRequest {
  Eigen::MatrixXd cond;      // same layout as SampleRequest::cond
  CfgConfig cfg;
  TimeGrid grid;             // the forward grid, t_end -> t_start
  SolverSpec solver;
  Eigen::MatrixXd final_y;   // d x B terminal reparam state from the forward solve
  Eigen::MatrixXd dL_dx0;    // d x B
  GradRequest want;
  bool recompute_check = false;
  double drift_tolerance = 1e-3;
  /// When set, must equal `grid` (guards against pairing with a different run).
  std::optional<TimeGrid> forward_grid;
};

struct AdjointResult {
  Eigen::MatrixXd x_T;       // d x B
  Eigen::VectorXd theta;     // summed over the batch; empty unless requested
  Eigen::MatrixXd cond;      // shaped like the request condition; empty unless requested
  double rho_start = 0.0;    // dL/d rho_0; only when want.time
  double rho_end = 0.0;      // dL/d rho_N; only when want.time
  Eigen::MatrixXd recovered_y0;
  SolveStats stats;          // nfe counts network evaluations of the backward pass
  std::optional<double> recompute_drift;
  std::vector<std::string> warnings;
};

/// Augmented adjoint solve on the rho clock, re-integrating y backward
/// alongside a_y, a_theta, a_c (and a_rho). Memory is independent of N.
AdjointResult adjoint_backward(const Denoiser& model, const NoiseSchedule& sched,
                               const AdjointRequest& req);

/// Discrete chain rule through a recorded fixed-step reparam solve. Keeps
/// all N+1 states.
AdjointResult naive_backprop(const Denoiser& model, const NoiseSchedule& sched,
                             const SampleRequest& forward, const Eigen::MatrixXd& dL_dx0,
                             GradRequest want = {});

/// Counts naive_backprop invocations (tasks must never call it).
long naive_backprop_calls();

/// Scalar loss on generated samples with its gradient.
struct Loss {
  std::function<double(const Eigen::MatrixXd&)> value;
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> grad;
};

/// 0.5 * sum ||x0 - target||^2.
Loss mse_to_target(const Eigen::MatrixXd& target);
/// <v, x0> summed over the batch.
Loss linear_loss(const Eigen::MatrixXd& v);

enum class GradTarget { noise, theta, cond, time };
std::string to_string(GradTarget t);
GradTarget parse_grad_target(const std::string& s);

struct GradcheckRow {
  GradTarget target;
  long coordinate;
  double analytic;
  double numeric;
  double rel_err;
};

struct GradcheckConfig {
  std::vector<GradTarget> targets{GradTarget::noise, GradTarget::theta, GradTarget::cond};
  double h = 1e-4;
  long theta_coords = 20;
  double tolerance = 1e-3;
  std::uint64_t seed = 0;    // picks the theta coordinates
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  double max_rel_err = 0.0;
  bool passed = false;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central differences of L(sample(x_T, c, theta)) against adjoint_backward.
/// `forward` must be a reparam request.
GradcheckReport gradcheck(const Denoiser& model, const NoiseSchedule& sched,
                          const SampleRequest& forward, const Loss& loss,
                          const GradcheckConfig& cfg);

std::string gradcheck_csv(const GradcheckReport& report);

}  // namespace adjd
