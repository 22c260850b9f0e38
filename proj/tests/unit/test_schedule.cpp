#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "adjd/errors.hpp"
#include "adjd/rng.hpp"
#include "adjd/schedule.hpp"

using namespace adjd;

namespace {

const NoiseSchedule kCosine{ScheduleKind::cosine, 0.1, 20.0, 0.99, 1e-3};

// Independent closed forms for the two kinds.
double alpha_oracle(const NoiseSchedule& s, double t) {
  if (s.kind == ScheduleKind::linear)
    return std::exp(-0.25 * t * t * (s.beta_max - s.beta_min) - 0.5 * t * s.beta_min);
  const double off = 0.008, h = std::numbers::pi / 2;
  return std::cos((t + off) / (1 + off) * h) / std::cos(off / (1 + off) * h);
}

}  // namespace

TEST_SUITE("schedule") {

TEST_CASE("alpha, sigma and gamma match closed forms") {
  for (const NoiseSchedule& s : {NoiseSchedule{}, kCosine}) {
    for (double t : {0.0, 1e-3, 0.1, 0.5, 0.9}) {
      const AlphaSigma as = alpha_sigma(s, t);
      CHECK(as.alpha == doctest::Approx(alpha_oracle(s, t)).epsilon(1e-13));
      CHECK(as.alpha * as.alpha + as.sigma * as.sigma == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(gamma(s, t) == doctest::Approx(as.sigma / as.alpha).epsilon(1e-13));
    }
  }
  // linear default at T = 1: sqrt(e^{10.05} - 1)
  CHECK(gamma(NoiseSchedule{}, 1.0) == doctest::Approx(std::sqrt(std::exp(10.05) - 1.0)).epsilon(1e-13));
  CHECK(gamma(NoiseSchedule{}, 1.0) == doctest::Approx(152.17).epsilon(1e-4));
  CHECK(gamma(NoiseSchedule{}, 0.0) == 0.0);
}

TEST_CASE("drift, diffusion and gamma' agree with finite differences") {
  for (const NoiseSchedule& s : {NoiseSchedule{}, kCosine}) {
    for (double t : {0.01, 0.3, 0.7}) {
      const double h = 1e-6;
      const double dla = (std::log(alpha_oracle(s, t + h)) - std::log(alpha_oracle(s, t - h))) / (2 * h);
      const DriftDiffusion dd = drift_diffusion(s, t);
      CHECK(dd.f == doctest::Approx(dla).epsilon(1e-7));
      auto s2 = [&](double u) { return 1.0 - alpha_oracle(s, u) * alpha_oracle(s, u); };
      const double ds2 = (s2(t + h) - s2(t - h)) / (2 * h);
      CHECK(dd.g2 == doctest::Approx(ds2 - 2 * dd.f * s2(t)).epsilon(1e-7));
      CHECK(dd.g2 > 0.0);
      const double dg = (gamma(s, t + h) - gamma(s, t - h)) / (2 * h);
      CHECK(gamma_dot(s, t) == doctest::Approx(dg).epsilon(1e-7));
    }
  }
  CHECK_THROWS_AS(gamma_dot(NoiseSchedule{}, 0.0), DomainError);
}

TEST_CASE("gamma inverse: closed form, bisection and monotonicity") {
  for (const NoiseSchedule& s : {NoiseSchedule{}, kCosine}) {
    double prev = -1.0;
    for (int i = 0; i <= 50; ++i) {
      const double t = s.t_start + (s.t_end - s.t_start) * i / 50.0;
      const double r = gamma(s, t);
      CHECK(r > prev);
      prev = r;
      CHECK(gamma_inv(s, r) == doctest::Approx(t).epsilon(1e-10));
      CHECK(gamma_inv_bisect(s, r) == doctest::Approx(t).epsilon(1e-10));
    }
    CHECK_THROWS_AS(gamma_inv(s, gamma(s, s.t_end) * 1.01), DomainError);
    CHECK_THROWS_AS(gamma_inv(s, -1.0), DomainError);
  }
}

TEST_CASE("time grids") {
  const NoiseSchedule s;
  for (GridScheme g : {GridScheme::uniform, GridScheme::logsnr, GridScheme::quadratic}) {
    const TimeGrid grid = time_grid(s, 17, g);
    REQUIRE(grid.steps() == 17);
    CHECK(grid.points.front() == s.t_end);
    CHECK(grid.points.back() == s.t_start);
    for (std::size_t i = 1; i < grid.points.size(); ++i) CHECK(grid.points[i] < grid.points[i - 1]);
  }
  // logsnr: equal steps in log(alpha/sigma) = -log(gamma)
  const TimeGrid ls = time_grid(s, 8, GridScheme::logsnr);
  const double d0 = std::log(gamma(s, ls.points[0])) - std::log(gamma(s, ls.points[1]));
  for (std::size_t i = 1; i < 8; ++i)
    CHECK(std::log(gamma(s, ls.points[i])) - std::log(gamma(s, ls.points[i + 1])) == doctest::Approx(d0).epsilon(1e-9));
  CHECK(time_grid(s, 1, GridScheme::uniform).points == std::vector<double>{s.t_end, s.t_start});
  CHECK_THROWS_AS(time_grid(s, 0, GridScheme::uniform), ArgumentError);
}

TEST_CASE("validation and json") {
  NoiseSchedule bad;
  bad.t_start = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.beta_max = 0.05;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.kind = ScheduleKind::discrete;
  CHECK_THROWS_AS(bad.validate(), UnsupportedError);
  CHECK_THROWS_AS(alpha_sigma(NoiseSchedule{}, 1.5), DomainError);
  try {
    parse_schedule_kind("sigmoid");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.key_path() == "schedule.kind");
  }

  nlohmann::json j = kCosine;
  CHECK(j.get<NoiseSchedule>() == kCosine);
  CHECK(j["kind"] == "cosine");
}

}

TEST_SUITE("rng") {

TEST_CASE("streams are reproducible and labels separate them") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng::derive(1, "train") == Rng::derive(1, "train"));
  CHECK(Rng::derive(1, "train") != Rng::derive(1, "data"));
  CHECK(Rng::derive(1, "train") != Rng::derive(2, "train"));

  // adding a new labelled stream leaves an existing one untouched
  Rng root(9);
  Rng first = root.substream("x");
  Rng other = root.substream("y");
  (void)other.normal();
  Rng again = Rng(9).substream("x");
  CHECK(first.normal() == again.normal());
}

TEST_CASE("distributions") {
  Rng r(3);
  const Eigen::MatrixXd z = r.normal_matrix(1, 200000);
  CHECK(std::abs(z.mean()) < 0.01);
  CHECK(std::abs((z.array() - z.mean()).square().mean() - 1.0) < 0.02);
  double lo = 1.0, hi = 0.0;
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    seen.insert(r.below(7));
  }
  CHECK(lo > 0.0);
  CHECK(hi <= 1.0);
  CHECK(seen == std::set<std::uint64_t>{0, 1, 2, 3, 4, 5, 6});
}

}
