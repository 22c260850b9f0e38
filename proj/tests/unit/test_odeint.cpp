#include <doctest.h>

#include <cmath>

#include "adjd/errors.hpp"
#include "adjd/odeint.hpp"

using namespace adjd;

namespace {

// y' = -y on [0, 1], y(0) = 1.
OdeProblem decay() {
  OdeProblem p;
  p.dynamics = [](const State& y, double, State& out) { out = -y; };
  p.clock_start = 0.0;
  p.clock_end = 1.0;
  p.state_dim = 1;
  return p;
}

std::vector<double> uniform(double a, double b, int n) {
  std::vector<double> g(n + 1);
  for (int i = 0; i <= n; ++i) g[i] = a + (b - a) * i / n;
  g.back() = b;
  return g;
}

double decay_error(SolverKind k, int n) {
  SolverConfig cfg;
  cfg.kind = k;
  cfg.grid = uniform(0.0, 1.0, n);
  return std::abs(integrate(decay(), State::Ones(1), cfg).final_state[0] - std::exp(-1.0));
}

}  // namespace

TEST_SUITE("odeint") {

TEST_CASE("convergence orders on exponential decay") {
  struct Case {
    SolverKind kind;
    double min_slope;
    int n;
  };
  for (const Case& c : {Case{SolverKind::euler, 0.9, 64}, Case{SolverKind::heun, 1.9, 32},
                        Case{SolverKind::rk4, 3.9, 16}, Case{SolverKind::ab4, 3.5, 32}}) {
    const double slope = std::log2(decay_error(c.kind, c.n) / decay_error(c.kind, 2 * c.n));
    CAPTURE(to_string(c.kind));
    CHECK(slope >= c.min_slope);
  }
}

TEST_CASE("one step of each tableau on a linear problem") {
  // y' = -y, one step of size h: the stability polynomials
  const double h = 0.1;
  auto one = [&](SolverKind k) {
    SolverConfig cfg;
    cfg.kind = k;
    cfg.grid = {0.0, h};
    OdeProblem p = decay();
    p.clock_end = h;
    return integrate(p, State::Ones(1), cfg).final_state[0];
  };
  CHECK(one(SolverKind::euler) == doctest::Approx(1 - h).epsilon(1e-15));
  CHECK(one(SolverKind::heun) == doctest::Approx(1 - h + h * h / 2).epsilon(1e-15));
  CHECK(one(SolverKind::rk4) == doctest::Approx(1 - h + h * h / 2 - h * h * h / 6 + h * h * h * h / 24).epsilon(1e-15));
}

TEST_CASE("ab4 weights reduce to the classical coefficients on a uniform grid") {
  const auto w = ab4_weights({3.0, 2.0, 1.0, 0.0}, 4.0);
  CHECK(w[0] == doctest::Approx(55.0 / 24));
  CHECK(w[1] == doctest::Approx(-59.0 / 24));
  CHECK(w[2] == doctest::Approx(37.0 / 24));
  CHECK(w[3] == doctest::Approx(-9.0 / 24));
  // exact for cubic derivatives on a non-uniform grid: y' = t^3
  const std::array<double, 4> nodes{0.9, 0.5, 0.35, 0.0};
  const auto v = ab4_weights(nodes, 1.3);
  double s = 0;
  for (int j = 0; j < 4; ++j) s += v[j] * std::pow(nodes[j], 3);
  CHECK(s == doctest::Approx((std::pow(1.3, 4) - std::pow(0.9, 4)) / 4).epsilon(1e-13));
}

TEST_CASE("backward clocks and evaluation counts") {
  OdeProblem p = decay();
  p.clock_start = 1.0;
  p.clock_end = 0.0;
  SolverConfig cfg;
  cfg.kind = SolverKind::rk4;
  cfg.grid = uniform(1.0, 0.0, 40);
  const Solution s = integrate(p, State::Ones(1), cfg);
  CHECK(s.final_state[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-8));
  CHECK(s.stats.nfe == 160);
  CHECK(s.stats.steps_taken == 40);

  cfg.kind = SolverKind::ab4;
  CHECK(integrate(p, State::Ones(1), cfg).stats.nfe == 40 + 9);
  cfg.kind = SolverKind::euler;
  const Trajectory tr = record_trajectory(p, State::Ones(1), cfg);
  CHECK(tr.states.size() == 41);
  CHECK(tr.stats.max_retained_states == 41);
}

TEST_CASE("adaptive solver meets its tolerance") {
  OdeProblem p;
  p.dynamics = [](const State& y, double t, State& out) {
    out.resize(2);
    out[0] = y[1];
    out[1] = -y[0] * (1 + t);
  };
  p.state_dim = 2;
  p.clock_end = 3.0;
  SolverConfig tight;
  tight.kind = SolverKind::rk4;
  tight.grid = uniform(0.0, 3.0, 4000);
  const State ref = integrate(p, State::Ones(2), tight).final_state;
  SolverConfig cfg;
  cfg.kind = SolverKind::adaptive_rk45;
  cfg.rtol = 1e-8;
  cfg.atol = 1e-10;
  const Solution s = integrate(p, State::Ones(2), cfg);
  CHECK((s.final_state - ref).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(s.stats.nfe > 0);
}

TEST_CASE("errors") {
  SolverConfig cfg;
  cfg.kind = SolverKind::ab4;
  cfg.grid = uniform(0.0, 1.0, 3);
  CHECK_THROWS_AS(integrate(decay(), State::Ones(1), cfg), ArgumentError);
  cfg.kind = SolverKind::rk4;
  cfg.grid = {0.0, 0.5};
  CHECK_THROWS_AS(integrate(decay(), State::Ones(1), cfg), ArgumentError);
  cfg.grid = {0.0, 0.7, 0.5, 1.0};
  CHECK_THROWS_AS(integrate(decay(), State::Ones(1), cfg), ArgumentError);

  OdeProblem blow = decay();
  blow.dynamics = [](const State& y, double t, State& out) { out = y / (0.5 - t); };
  cfg.grid = uniform(0.0, 1.0, 4);
  CHECK_THROWS_AS(integrate(blow, State::Ones(1), cfg), SolverError);
  CHECK_THROWS_AS(integrate(decay(), State::Ones(2), cfg), ArgumentError);
  try {
    parse_solver_kind("rk9");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.key_path() == "solver.kind");
  }
}

}
