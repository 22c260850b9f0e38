#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "adjd/errors.hpp"
#include "adjd/metrics.hpp"
#include "adjd/rng.hpp"

using namespace adjd;

namespace {

// W1 between equal-size uniform empirical measures: best of all pairings.
double w1_brute(std::vector<double> a, const std::vector<double>& b) {
  std::sort(a.begin(), a.end());
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    best = std::min(best, s / static_cast<double>(a.size()));
  } while (std::next_permutation(a.begin(), a.end()));
  return best;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("sliced wasserstein: identical sets and shifted deltas") {
  Rng rng(5);
  const Eigen::MatrixXd a = rng.normal_matrix(3, 40);
  CHECK(sliced_wasserstein(a, a) == 0.0);

  Eigen::MatrixXd p0 = Eigen::MatrixXd::Zero(1, 1), p1 = Eigen::MatrixXd::Ones(1, 1);
  CHECK(sliced_wasserstein(p0, p1, 16, 3) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("1-D W1 matches the exhaustive pairing oracle") {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> a(3), b(3);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    CHECK(wasserstein_1d(a, b) == doctest::Approx(w1_brute(a, b)).epsilon(1e-12));
  }
  // unequal sizes: {0} vs {0, 1} moves half the mass by 1
  CHECK(wasserstein_1d({0.0}, {0.0, 1.0}) == doctest::Approx(0.5));
}

TEST_CASE("sliced wasserstein: symmetric, nonnegative, deterministic, translation bound") {
  Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd a = rng.normal_matrix(2, 3), b = rng.normal_matrix(2, 3);
    const double ab = sliced_wasserstein(a, b, 64, 9), ba = sliced_wasserstein(b, a, 64, 9);
    CHECK(ab >= 0.0);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-14));
    CHECK(sliced_wasserstein(a, b, 64, 9) == ab);
    Eigen::Vector2d v = rng.normal_matrix(2, 1);
    CHECK(sliced_wasserstein(a, a.colwise() + v, 64, 9) <= v.norm() + 1e-12);
  }
}

TEST_CASE("point masses: SW is the mean |<v,u>|, 2|v|/pi in the plane") {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(2, 1), q(2, 1);
  q << 0.6, -0.8;
  CHECK(sliced_wasserstein(p, q, 20000, 4) == doctest::Approx(2.0 / std::numbers::pi).epsilon(0.01));
}

TEST_CASE("sliced wasserstein errors") {
  CHECK_THROWS_AS(sliced_wasserstein(Eigen::MatrixXd(2, 0), Eigen::MatrixXd::Ones(2, 1)), ArgumentError);
  CHECK_THROWS_AS(sliced_wasserstein(Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Ones(3, 1)), ArgumentError);
  CHECK_THROWS_AS(sliced_wasserstein(Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Ones(2, 1), 0), ArgumentError);
}

TEST_CASE("success ratios") {
  CHECK(success_ratio({true, true, true}, {0, 0, 1}).overall == 1.0);
  CHECK(success_ratio({true, false, true, false}, {0, 0, 0, 0}).overall == 0.5);

  std::vector<bool> f;
  std::vector<long> g;
  for (int i = 0; i < 5; ++i) f.push_back(i < 3), g.push_back(0);
  for (int i = 0; i < 5; ++i) f.push_back(i < 1), g.push_back(1);
  const SuccessTable t = success_ratio(f, g);
  REQUIRE(t.groups.size() == 2);
  CHECK(t.groups[0].ratio == doctest::Approx(0.6));
  CHECK(t.groups[1].ratio == doctest::Approx(0.2));
  CHECK(t.overall == doctest::Approx(0.4));
  CHECK(t.csv() == "group,successes,total,ratio\n0,3,5,0.59999999999999998\n1,1,5,0.20000000000000001\nall,4,10,0.40000000000000002\n");

  CHECK_THROWS_AS(success_ratio({}, {}), ArgumentError);
  CHECK_THROWS_AS(success_ratio({true}, {0, 1}), ArgumentError);
}

TEST_CASE("run report totals and memory flags") {
  const RunReport r = run_report({{"forward", 100, 2, 0.0}, {"backward", 150, 7, 0.0}});
  CHECK(r.total_nfe == 250);
  CHECK_FALSE(r.adjoint_constant.has_value());

  const RunReport s = run_report({}, {{10, 6, 11}, {50, 6, 51}, {200, 6, 201}});
  CHECK(s.to_json()["adjoint_memory"]["O(1)"] == true);
  CHECK(s.to_json()["naive_memory"]["O(N)"] == true);

  const RunReport u = run_report({}, {{10, 6, 12}, {50, 7}});
  CHECK(*u.adjoint_constant == false);
  CHECK(*u.naive_linear == false);
}

TEST_CASE("metrics table csv is stable and rejects ragged rows") {
  MetricsTable t;
  t.columns = {"epoch", "loss"};
  t.add({0, 0.1});
  t.add({1, 1.0 / 3.0});
  CHECK(t.csv() == "epoch,loss\n0,0.10000000000000001\n1,0.33333333333333331\n");
  CHECK_THROWS_AS(t.add({1.0}), ArgumentError);
}

}
