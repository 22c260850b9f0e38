#include "adjd/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "adjd/errors.hpp"

namespace adjd {
namespace {

constexpr double kCosineOffset = 0.008;
// Largest usable end time for the cosine kind (alpha stays well above 0).
constexpr double kCosineMaxT = 0.9946;
constexpr double kTimeSlack = 1e-12;
constexpr double kRhoSlack = 1e-9;

double cosine_phase(double t) {
  return 0.5 * std::numbers::pi * (t + kCosineOffset) / (1.0 + kCosineOffset);
}

void check_time(const NoiseSchedule& s, double t, const char* op) {
  if (!std::isfinite(t) || t < -kTimeSlack || t > s.t_end + kTimeSlack)
    throw DomainError(std::string(op) + ": t=" + std::to_string(t) + " outside [0, " +
                      std::to_string(s.t_end) + "]");
}

void check_supported(const NoiseSchedule& s) {
  if (s.kind == ScheduleKind::discrete)
    throw UnsupportedError("discrete schedule kind needs an external beta table; unsupported");
}

}  // namespace

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::discrete: return "discrete";
  }
  return "?";
}

std::string to_string(GridScheme s) {
  switch (s) {
    case GridScheme::uniform: return "uniform";
    case GridScheme::logsnr: return "logSNR";
    case GridScheme::quadratic: return "quadratic";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  if (s == "discrete") return ScheduleKind::discrete;
  throw ValidationError("schedule.kind", "unknown schedule kind '" + s + "'");
}

GridScheme parse_grid_scheme(const std::string& s) {
  if (s == "uniform") return GridScheme::uniform;
  if (s == "logSNR" || s == "logsnr") return GridScheme::logsnr;
  if (s == "quadratic") return GridScheme::quadratic;
  throw ValidationError("solver.grid", "unknown grid scheme '" + s + "'");
}

void NoiseSchedule::validate() const {
  check_supported(*this);
  if (!(t_start > 0.0)) throw ValidationError("schedule.t_start", "must be > 0");
  if (!(t_end > t_start)) throw ValidationError("schedule.t_end", "must exceed t_start");
  if (kind == ScheduleKind::linear) {
    if (!(beta_min > 0.0)) throw ValidationError("schedule.beta_min", "must be > 0");
    if (!(beta_max >= beta_min))
      throw ValidationError("schedule.beta_max", "must be >= beta_min");
  } else if (kind == ScheduleKind::cosine && t_end > kCosineMaxT) {
    throw ValidationError("schedule.t_end", "cosine kind requires t_end <= 0.9946");
  }
}

void to_json(nlohmann::json& j, const NoiseSchedule& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"beta_min", s.beta_min},
                     {"beta_max", s.beta_max},
                     {"t_end", s.t_end},
                     {"t_start", s.t_start}};
}

void from_json(const nlohmann::json& j, NoiseSchedule& s) {
  s.kind = parse_schedule_kind(j.at("kind").get<std::string>());
  s.beta_min = j.at("beta_min").get<double>();
  s.beta_max = j.at("beta_max").get<double>();
  s.t_end = j.at("t_end").get<double>();
  s.t_start = j.at("t_start").get<double>();
}

double log_alpha(const NoiseSchedule& s, double t) {
  check_supported(s);
  check_time(s, t, "log_alpha");
  t = std::max(t, 0.0);
  if (s.kind == ScheduleKind::linear)
    return -0.25 * t * t * (s.beta_max - s.beta_min) - 0.5 * t * s.beta_min;
  return std::log(std::cos(cosine_phase(t))) - std::log(std::cos(cosine_phase(0.0)));
}

AlphaSigma alpha_sigma(const NoiseSchedule& s, double t) {
  const double la = log_alpha(s, t);
  // sigma^2 = 1 - alpha^2 = -expm1(2 log alpha), accurate near t = 0.
  return {std::exp(la), std::sqrt(-std::expm1(2.0 * la))};
}

DriftDiffusion drift_diffusion(const NoiseSchedule& s, double t) {
  check_supported(s);
  check_time(s, t, "drift_diffusion");
  t = std::max(t, 0.0);
  double f;
  if (s.kind == ScheduleKind::linear) {
    f = -0.5 * (s.beta_min + t * (s.beta_max - s.beta_min));
  } else {
    f = -0.5 * std::numbers::pi / (1.0 + kCosineOffset) * std::tan(cosine_phase(t));
  }
  const auto [alpha, sigma] = alpha_sigma(s, t);
  const double dsigma2 = -2.0 * f * alpha * alpha;
  return {f, dsigma2 - 2.0 * f * sigma * sigma};
}

double gamma(const NoiseSchedule& s, double t) {
  const auto [alpha, sigma] = alpha_sigma(s, t);
  return sigma / alpha;
}

double gamma_dot(const NoiseSchedule& s, double t) {
  if (!(t > 0.0)) throw DomainError("gamma_dot: requires t > 0");
  const auto [alpha, sigma] = alpha_sigma(s, t);
  return -drift_diffusion(s, t).f / (sigma * alpha);
}

namespace {

double clamp_rho(const NoiseSchedule& s, double rho) {
  const double hi = gamma(s, s.t_end);
  if (!std::isfinite(rho) || rho < -kRhoSlack || rho > hi + kRhoSlack * std::max(1.0, hi))
    throw DomainError("gamma_inv: rho=" + std::to_string(rho) + " outside [0, " +
                      std::to_string(hi) + "]");
  return std::clamp(rho, 0.0, hi);
}

}  // namespace

double gamma_inv_bisect(const NoiseSchedule& s, double rho) {
  check_supported(s);
  rho = clamp_rho(s, rho);
  double lo = 0.0, hi = s.t_end;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (gamma(s, mid) < rho)
      lo = mid;
    else
      hi = mid;
  }
  return (gamma(s, hi) - rho < rho - gamma(s, lo)) ? hi : lo;
}

double gamma_inv(const NoiseSchedule& s, double rho) {
  check_supported(s);
  if (s.kind != ScheduleKind::linear) return gamma_inv_bisect(s, rho);
  rho = clamp_rho(s, rho);
  // alpha = 1/sqrt(1+rho^2); solve a t^2 + b t - c = 0 with c = -log(alpha).
  const double a = 0.25 * (s.beta_max - s.beta_min);
  const double b = 0.5 * s.beta_min;
  const double c = 0.5 * std::log1p(rho * rho);
  const double t = 2.0 * c / (b + std::sqrt(b * b + 4.0 * a * c));
  return std::min(t, s.t_end);
}

TimeGrid time_grid(const NoiseSchedule& s, std::size_t n_steps, GridScheme scheme) {
  if (n_steps == 0) throw ArgumentError("time_grid: n_steps must be >= 1");
  s.validate();
  TimeGrid grid;
  grid.scheme = scheme;
  grid.points.resize(n_steps + 1);
  const double n = static_cast<double>(n_steps);
  switch (scheme) {
    case GridScheme::uniform:
      for (std::size_t i = 0; i <= n_steps; ++i)
        grid.points[i] = s.t_end + (s.t_start - s.t_end) * (static_cast<double>(i) / n);
      break;
    case GridScheme::logsnr: {
      // lambda = log(alpha/sigma) = -log(gamma).
      const double lam_end = -std::log(gamma(s, s.t_end));
      const double lam_start = -std::log(gamma(s, s.t_start));
      for (std::size_t i = 0; i <= n_steps; ++i) {
        const double lam = lam_end + (lam_start - lam_end) * (static_cast<double>(i) / n);
        grid.points[i] = gamma_inv(s, std::exp(-lam));
      }
      break;
    }
    case GridScheme::quadratic: {
      const double r_end = std::sqrt(s.t_end);
      const double r_start = std::sqrt(s.t_start);
      for (std::size_t i = 0; i <= n_steps; ++i) {
        const double r = r_end + (r_start - r_end) * (static_cast<double>(i) / n);
        grid.points[i] = r * r;
      }
      break;
    }
  }
  grid.points.front() = s.t_end;
  grid.points.back() = s.t_start;
  return grid;
}

}  // namespace adjd
