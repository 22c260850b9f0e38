#include <doctest.h>

#include <cmath>

#include "adjd/adjoint.hpp"
#include "adjd/errors.hpp"
#include "adjd/sampler.hpp"
#include "../support/toy.hpp"

using namespace adjd;
using adjd::testing::constant_model;
using adjd::testing::trained_toy;

namespace {

SampleRequest request(const Denoiser& m, const NoiseSchedule& s, std::size_t n, SolverKind kind,
                      Eigen::Index batch = 1, std::uint64_t seed = 3) {
  Rng rng(seed);
  SampleRequest r;
  r.x_T = draw_initial_noise(s, m.state_dim(), batch, rng);
  r.cond = m.embed(2);
  r.grid = time_grid(s, n, GridScheme::uniform);
  r.solver.kind = kind;
  return r;
}

AdjointRequest adjoint_for(const SampleRequest& fwd, const SampleResult& out,
                           const Eigen::MatrixXd& seed) {
  AdjointRequest a;
  a.cond = fwd.cond;
  a.cfg = fwd.cfg;
  a.grid = fwd.grid;
  a.solver = fwd.solver;
  a.final_y = out.final_y;
  a.dL_dx0 = seed;
  return a;
}

}  // namespace

TEST_SUITE("adjoint") {

TEST_CASE("constant field: gradients match the hand-derived Jacobians") {
  const NoiseSchedule s;
  Eigen::VectorXd b(2);
  b << 0.3, -0.7;
  const Denoiser m = constant_model(b);
  Eigen::MatrixXd v(2, 1);
  v << 1.5, -0.25;
  const double aT = alpha_sigma(s, s.t_end).alpha, a0 = alpha_sigma(s, s.t_start).alpha;
  const double drho = gamma(s, s.t_start) - gamma(s, s.t_end);
  for (std::size_t n : {1, 7, 50}) {
    for (SolverKind kind : {SolverKind::euler, SolverKind::rk4}) {
      const SampleRequest fwd = request(m, s, n, kind);
      const SampleResult out = sample(m, s, fwd);
      AdjointRequest ar = adjoint_for(fwd, out, v);
      const AdjointResult g = adjoint_backward(m, s, ar);
      CHECK((g.x_T - (a0 / aT) * v).cwiseAbs().maxCoeff() < 1e-8);
      const Eigen::Index off = m.net().bias_offset(m.net().num_layers() - 1);
      const Eigen::VectorXd expected = a0 * drho * v.col(0);
      CHECK((g.theta.segment(off, 2) - expected).cwiseAbs().maxCoeff() < 1e-8);
      CHECK(g.cond.cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("zero seed gives exactly zero gradients") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  const SampleRequest fwd = request(m, s, 20, SolverKind::rk4);
  const SampleResult out = sample(m, s, fwd);
  const AdjointResult g = adjoint_backward(m, s, adjoint_for(fwd, out, Eigen::MatrixXd::Zero(2, 1)));
  CHECK(g.x_T.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.theta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.cond.cwiseAbs().maxCoeff() == 0.0);
  const AdjointResult nb = naive_backprop(m, s, fwd, Eigen::MatrixXd::Zero(2, 1));
  CHECK(nb.x_T.cwiseAbs().maxCoeff() == 0.0);
  CHECK(nb.theta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradients are linear in the seed") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  const SampleRequest fwd = request(m, s, 30, SolverKind::rk4, 3);
  const SampleResult out = sample(m, s, fwd);
  Rng rng(11);
  const Eigen::MatrixXd u = rng.normal_matrix(2, 3), w = rng.normal_matrix(2, 3);
  const double al = 0.7, be = -1.3;
  const auto gu = adjoint_backward(m, s, adjoint_for(fwd, out, u));
  const auto gw = adjoint_backward(m, s, adjoint_for(fwd, out, w));
  const auto gc = adjoint_backward(m, s, adjoint_for(fwd, out, al * u + be * w));
  CHECK((gc.x_T - al * gu.x_T - be * gw.x_T).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((gc.theta - al * gu.theta - be * gw.theta).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((gc.cond - al * gu.cond - be * gw.cond).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("adjoint matches central differences on the trained model") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  const SampleRequest fwd = request(m, s, 200, SolverKind::rk4);
  Eigen::MatrixXd target(2, 1);
  target << 0.2, -0.4;
  GradcheckConfig gc;
  const GradcheckReport rep = gradcheck(m, s, fwd, mse_to_target(target), gc);
  CHECK(rep.rows.size() == 2 + 20 + 8);
  for (const auto& r : rep.rows) {
    INFO(to_string(r.target), " ", r.coordinate, " analytic=", r.analytic, " numeric=", r.numeric);
    CHECK(r.rel_err <= 1e-3);
  }
  CHECK(rep.passed);
}

TEST_CASE("clock gradient matches differences of the rho_0 node") {
  // The first rho step is the widest on a uniform t grid, so the discrete
  // solve only approaches the continuous clock sensitivity on a fine grid.
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  SampleRequest fwd = request(m, s, 400, SolverKind::rk4);
  fwd.grid = time_grid(s, 400, GridScheme::logsnr);
  Eigen::MatrixXd target(2, 1);
  target << -0.5, 0.1;
  GradcheckConfig gc;
  gc.targets = {GradTarget::time};
  const GradcheckReport rep = gradcheck(m, s, fwd, mse_to_target(target), gc);
  REQUIRE(rep.rows.size() == 1);
  INFO("analytic=", rep.rows[0].analytic, " numeric=", rep.rows[0].numeric);
  CHECK(rep.rows[0].rel_err <= 1e-3);
}

TEST_CASE("guided (cfg) adjoint matches central differences") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  SampleRequest fwd = request(m, s, 100, SolverKind::rk4);
  fwd.cfg.scale = 2.5;
  Eigen::MatrixXd v(2, 1);
  v << 0.6, 0.8;
  GradcheckConfig gc;
  gc.theta_coords = 10;
  const GradcheckReport rep = gradcheck(m, s, fwd, linear_loss(v), gc);
  CHECK(rep.max_rel_err <= 1e-3);
}

TEST_CASE("naive backprop is the exact derivative of the discrete solve") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  Eigen::MatrixXd v(2, 1);
  v << -0.3, 1.1;
  for (SolverKind kind : {SolverKind::euler, SolverKind::heun, SolverKind::rk4, SolverKind::ab4}) {
    CAPTURE(to_string(kind));
    const SampleRequest fwd = request(m, s, 8, kind);
    const AdjointResult g = naive_backprop(m, s, fwd, v);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < 2; ++i) {
      SampleRequest p = fwd, q = fwd;
      p.x_T(i) += h;
      q.x_T(i) -= h;
      const double fd = (v.cwiseProduct(sample(m, s, p).x0).sum() -
                         v.cwiseProduct(sample(m, s, q).x0).sum()) / (2 * h);
      CHECK(relative_error(g.x_T(i), fd) < 1e-6);
    }
    const Eigen::VectorXd theta = m.flatten();
    for (Eigen::Index i : {0L, 100L, m.num_params() - 1}) {
      Denoiser mp = m, mq = m;
      Eigen::VectorXd tp = theta, tq = theta;
      tp[i] += h;
      tq[i] -= h;
      mp.unflatten(tp);
      mq.unflatten(tq);
      const double fd = (v.cwiseProduct(sample(mp, s, fwd).x0).sum() -
                         v.cwiseProduct(sample(mq, s, fwd).x0).sum()) / (2 * h);
      CHECK(relative_error(g.theta[i], fd) < 1e-5);
    }
  }
}

TEST_CASE("memory: constant for the adjoint, N+1 for naive backprop") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  Eigen::MatrixXd v(2, 1);
  v << 1.0, 0.5;
  long peak = -1;
  for (std::size_t n : {10, 50, 200, 1000}) {
    const SampleRequest fwd = request(m, s, n, SolverKind::rk4);
    const SampleResult out = sample(m, s, fwd);
    const AdjointResult g = adjoint_backward(m, s, adjoint_for(fwd, out, v));
    if (peak < 0) peak = g.stats.max_retained_states;
    CHECK(g.stats.max_retained_states == peak);
    CHECK(g.stats.max_retained_states <= 10);
    if (n <= 200) {
      const AdjointResult nb = naive_backprop(m, s, fwd, v);
      CHECK(nb.stats.max_retained_states == static_cast<long>(n) + 1);
      if (n == 200) {
        CHECK((g.x_T - nb.x_T).norm() <= 1e-2 * nb.x_T.norm());
        CHECK((g.theta - nb.theta).norm() <= 1e-2 * nb.theta.norm());
        CHECK((g.cond - nb.cond).norm() <= 1e-2 * nb.cond.norm());
      }
    }
  }
}

TEST_CASE("a small step against the noise gradient lowers a quadratic loss") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    SampleRequest fwd = request(m, s, 40, SolverKind::rk4, 1, 100 + trial);
    const Eigen::MatrixXd target = rng.normal_matrix(2, 1);
    const Loss loss = mse_to_target(target);
    const SampleResult out = sample(m, s, fwd);
    const AdjointResult g = adjoint_backward(m, s, adjoint_for(fwd, out, loss.grad(out.x0)));
    SampleRequest step = fwd;
    step.x_T -= 1e-3 * g.x_T;
    CHECK(loss.value(sample(m, s, step).x0) < loss.value(out.x0));
  }
}

TEST_CASE("recompute check reports endpoint drift") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  const SampleRequest fwd = request(m, s, 100, SolverKind::rk4);
  const SampleResult out = sample(m, s, fwd);
  AdjointRequest ar = adjoint_for(fwd, out, Eigen::MatrixXd::Ones(2, 1));
  ar.recompute_check = true;
  const AdjointResult g = adjoint_backward(m, s, ar);
  REQUIRE(g.recompute_drift.has_value());
  CHECK(*g.recompute_drift < 1e-3);
  CHECK(g.warnings.empty());
  CHECK((g.recovered_y0 - fwd.x_T / alpha_sigma(s, s.t_end).alpha).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("argument and support errors") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  SampleRequest fwd = request(m, s, 10, SolverKind::rk4);
  const SampleResult out = sample(m, s, fwd);
  AdjointRequest ar = adjoint_for(fwd, out, Eigen::MatrixXd::Ones(2, 1));
  ar.forward_grid = time_grid(s, 11, GridScheme::uniform);
  CHECK_THROWS_AS(adjoint_backward(m, s, ar), ArgumentError);
  ar.forward_grid.reset();
  ar.dL_dx0 = Eigen::MatrixXd::Ones(3, 1);
  CHECK_THROWS_AS(adjoint_backward(m, s, ar), ArgumentError);
  fwd.solver.kind = SolverKind::adaptive_rk45;
  CHECK_THROWS_AS(naive_backprop(m, s, fwd, Eigen::MatrixXd::Ones(2, 1)), UnsupportedError);
}

}  // TEST_SUITE
