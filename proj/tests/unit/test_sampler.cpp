#include <doctest.h>

#include <cmath>

#include "adjd/errors.hpp"
#include "adjd/parallel.hpp"
#include "adjd/sampler.hpp"
#include "../support/toy.hpp"

using namespace adjd;
using adjd::testing::constant_model;
using adjd::testing::trained_toy;

namespace {

SampleRequest request(const Denoiser& m, const NoiseSchedule& s, std::size_t n, SolverKind kind,
                      SampleMode mode, Eigen::Index batch = 1, std::uint64_t seed = 3) {
  Rng rng(seed);
  SampleRequest r;
  r.x_T = draw_initial_noise(s, m.state_dim(), batch, rng);
  r.cond = m.embed(1);
  r.grid = time_grid(s, n, GridScheme::uniform);
  r.solver.kind = kind;
  r.mode = mode;
  return r;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("constant field: reparam endpoint is exact at any N") {
  Eigen::VectorXd b(2);
  b << -0.4, 0.9;
  const Denoiser m = constant_model(b);
  for (const NoiseSchedule& s : {NoiseSchedule{}, NoiseSchedule{ScheduleKind::cosine, 0.1, 20, 0.99, 1e-3}}) {
    const double aT = alpha_sigma(s, s.t_end).alpha, a0 = alpha_sigma(s, s.t_start).alpha;
    for (std::size_t n : {1, 3, 25}) {
      for (SolverKind kind : {SolverKind::euler, SolverKind::heun, SolverKind::rk4}) {
        const SampleRequest r = request(m, s, n, kind, SampleMode::reparam, 4);
        const Eigen::MatrixXd expect =
            a0 * ((r.x_T / aT).colwise() + (gamma(s, s.t_start) - gamma(s, s.t_end)) * b);
        CHECK((sample(m, s, r).x0 - expect).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }
}

TEST_CASE("zero field maps x_T by the alpha ratio in both modes") {
  const NoiseSchedule s;
  const Denoiser m = constant_model(Eigen::VectorXd::Zero(2));
  const double ratio = alpha_sigma(s, s.t_start).alpha / alpha_sigma(s, s.t_end).alpha;
  const SampleRequest r = request(m, s, 2000, SolverKind::rk4, SampleMode::original, 3);
  CHECK((sample(m, s, r).x0 - ratio * r.x_T).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("network evaluations are counted per guided call") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  SampleRequest r = request(m, s, 10, SolverKind::rk4, SampleMode::reparam, 5);
  CHECK(sample(m, s, r).stats.nfe == 40);
  r.cfg.scale = 3.0;
  CHECK(sample(m, s, r).stats.nfe == 80);
  r.solver.kind = SolverKind::ab4;
  r.cfg.scale = 1.0;
  CHECK(sample(m, s, r).stats.nfe == 10 + 9);
  CHECK(steps_for_nfe(SolverKind::ab4, 19) == 10);
}

TEST_CASE("reparam and original agree on a fine grid") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  const SampleRequest rp = request(m, s, 500, SolverKind::rk4, SampleMode::reparam, 64, 21);
  SampleRequest og = rp;
  og.mode = SampleMode::original;
  const double diff = (sample(m, s, rp).x0 - sample(m, s, og).x0).cwiseAbs().maxCoeff();
  INFO("max abs diff ", diff);
  CHECK(diff <= 1e-4);
}

TEST_CASE("endpoint error shrinks with NFE in both modes") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  Rng rng(99);
  ErrorStudy study;
  study.noise = draw_initial_noise(s, 2, 64, rng);
  study.cond = m.embed(std::nullopt);
  const auto rows = solver_error_vs_reference(m, s, study);
  REQUIRE(rows.size() == 6);
  for (std::size_t k : {0u, 3u}) {
    CHECK(rows[k + 1].mean_l2 < rows[k].mean_l2);
    CHECK(rows[k + 2].mean_l2 < rows[k + 1].mean_l2);
  }
  const std::string csv = error_table_csv(rows);
  CHECK(csv.rfind("mode,nfe,mean_l2,std_l2\n", 0) == 0);
}

TEST_CASE("reference against itself has zero error") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  Rng rng(8);
  ErrorStudy study;
  study.noise = draw_initial_noise(s, 2, 4, rng);
  study.cond = m.embed(0);
  study.solver = SolverKind::rk4;
  study.modes = {SampleMode::reparam};
  study.nfe_list = {1000};
  const auto rows = solver_error_vs_reference(m, s, study);
  CHECK(rows[0].mean_l2 == 0.0);
}

TEST_CASE("constant field: one reparam step is exact, one original step is not") {
  const NoiseSchedule s;
  Eigen::VectorXd b(2);
  b << 0.5, 0.25;
  const Denoiser m = constant_model(b);
  const SampleRequest r = request(m, s, 1, SolverKind::euler, SampleMode::reparam, 1);
  const double aT = alpha_sigma(s, s.t_end).alpha, a0 = alpha_sigma(s, s.t_start).alpha;
  const Eigen::VectorXd exact =
      a0 * (r.x_T.col(0) / aT + (gamma(s, s.t_start) - gamma(s, s.t_end)) * b);
  CHECK((sample(m, s, r).x0.col(0) - exact).cwiseAbs().maxCoeff() <= 1e-12);
  SampleRequest o = r;
  o.mode = SampleMode::original;
  CHECK((sample(m, s, o).x0.col(0) - exact).cwiseAbs().maxCoeff() >= 1e-3);
}

TEST_CASE("recorded trajectories start at x_T and end at the sample") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  for (SampleMode mode : {SampleMode::reparam, SampleMode::original}) {
    const SampleRequest r = request(m, s, 12, SolverKind::heun, mode, 2);
    const SampleTrajectory tr = record_sample(m, s, r);
    REQUIRE(tr.x.size() == 13);
    CHECK((tr.x.front() - r.x_T).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((tr.x.back() - sample(m, s, r).x0).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(tr.times.front() == doctest::Approx(s.t_end));
  }
}

TEST_CASE("initial noise has the terminal marginal scale") {
  const NoiseSchedule s;
  Rng rng(4);
  const Eigen::MatrixXd x = draw_initial_noise(s, 2, 20000, rng);
  const double var = x.squaredNorm() / x.size();
  const double sigma2 = std::pow(alpha_sigma(s, s.t_end).sigma, 2);
  CHECK(var == doctest::Approx(sigma2).epsilon(0.03));
}

TEST_CASE("bad requests are rejected") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  SampleRequest r = request(m, s, 10, SolverKind::rk4, SampleMode::reparam);
  SampleRequest bad = r;
  bad.x_T = Eigen::MatrixXd::Zero(3, 1);
  CHECK_THROWS_AS(sample(m, s, bad), ArgumentError);
  bad = r;
  bad.x_T(0) = std::nan("");
  CHECK_THROWS_AS(sample(m, s, bad), DataError);
  bad = r;
  std::reverse(bad.grid.points.begin(), bad.grid.points.end());
  CHECK_THROWS_AS(sample(m, s, bad), ArgumentError);
  CHECK_THROWS_AS(parse_sample_mode("sde"), ValidationError);
  CHECK_THROWS_AS(steps_for_nfe(SolverKind::ab4, 10), ArgumentError);
}

TEST_CASE("batch splitting across threads does not change results") {
  const NoiseSchedule s;
  const Denoiser& m = trained_toy();
  const SampleRequest r = request(m, s, 20, SolverKind::rk4, SampleMode::reparam, 150);
  REQUIRE(r.x_T.cols() > 2 * kChunkColumns);
  const SampleResult one = sample(m, s, r);
  setenv("ADJD_THREADS", "3", 1);
  const SampleResult three = sample(m, s, r);
  unsetenv("ADJD_THREADS");
  CHECK(three.x0 == one.x0);
  CHECK(three.stats.nfe == one.stats.nfe);
}

}  // TEST_SUITE
