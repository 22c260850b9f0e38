#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace adjd {

enum class ScheduleKind { linear, cosine, discrete };
enum class GridScheme { uniform, logsnr, quadratic };

std::string to_string(ScheduleKind k);
std::string to_string(GridScheme s);
ScheduleKind parse_schedule_kind(const std::string& s);
GridScheme parse_grid_scheme(const std::string& s);

/// Variance-preserving noise schedule: x_t | x_0 ~ N(alpha_t x_0, sigma_t^2 I)
/// with alpha_t^2 + sigma_t^2 = 1. `beta_min`/`beta_max` only apply to the
/// linear kind; the cosine kind uses the fixed offset s = 0.008.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  double beta_min = 0.1;
  double beta_max = 20.0;
  double t_end = 1.0;
  double t_start = 1e-3;

  /// Throws ValidationError / UnsupportedError for unusable parameter sets.
  void validate() const;
  bool operator==(const NoiseSchedule&) const = default;
};

void to_json(nlohmann::json& j, const NoiseSchedule& s);
void from_json(const nlohmann::json& j, NoiseSchedule& s);

struct AlphaSigma {
  double alpha;
  double sigma;
};

struct DriftDiffusion {
  double f;   // d log(alpha) / dt
  double g2;  // d sigma^2/dt - 2 f sigma^2
};

/// log(alpha_t); finite on [0, t_end].
double log_alpha(const NoiseSchedule& s, double t);
AlphaSigma alpha_sigma(const NoiseSchedule& s, double t);
DriftDiffusion drift_diffusion(const NoiseSchedule& s, double t);

/// rho = gamma(t) = alpha_0 sigma_t / alpha_t - sigma_0, with alpha_0 = 1 and
/// sigma_0 = 0 evaluated at t = 0 exactly, so gamma(t) = sigma_t / alpha_t.
double gamma(const NoiseSchedule& s, double t);
/// d gamma / dt = -f(t) / (sigma_t alpha_t); requires t > 0.
double gamma_dot(const NoiseSchedule& s, double t);
/// Inverse of gamma. Closed form for the linear kind, bisection otherwise.
double gamma_inv(const NoiseSchedule& s, double rho);
/// Bisection inverse regardless of kind (used to cross-check the closed form).
double gamma_inv_bisect(const NoiseSchedule& s, double rho);

struct TimeGrid {
  std::vector<double> points;  // t_end = points[0] > ... > points[N] = t_start
  GridScheme scheme = GridScheme::uniform;

  std::size_t steps() const { return points.empty() ? 0 : points.size() - 1; }
  bool operator==(const TimeGrid&) const = default;
};

TimeGrid time_grid(const NoiseSchedule& s, std::size_t n_steps, GridScheme scheme);

}  // namespace adjd
