#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace adjd {

/// Named numeric columns, written as CSV with round-trip precision so two
/// identical runs produce identical bytes.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row);
  std::string csv() const;
};

/// Mean over random unit directions of the 1-D Wasserstein-1 distance between
/// the projected empirical distributions (columns are samples).
double sliced_wasserstein(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          int n_projections = 128, std::uint64_t seed = 0);

/// Exact W1 between two 1-D empirical distributions with uniform weights.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

struct GroupRatio {
  long group;
  long successes;
  long total;
  double ratio;
};

struct SuccessTable {
  std::vector<GroupRatio> groups;  // sorted by group label
  long successes = 0;
  long total = 0;
  double overall = 0.0;

  std::string csv() const;
};

SuccessTable success_ratio(const std::vector<bool>& flags, const std::vector<long>& groups);

struct PhaseStats {
  std::string phase;
  long nfe = 0;
  long peak_retained = 0;
  double seconds = 0.0;
};

/// Peak retained states of one N in a memory sweep; naive_peak < 0 when the
/// naive baseline was not run at that N.
struct MemoryPoint {
  long steps;
  long adjoint_peak;
  long naive_peak = -1;
};

struct RunReport {
  std::vector<PhaseStats> phases;
  long total_nfe = 0;
  std::optional<bool> adjoint_constant;  // "O(1)"
  std::optional<bool> naive_linear;      // "O(N)": peak == N + 1
  std::vector<MemoryPoint> sweep;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
};

RunReport run_report(const std::vector<PhaseStats>& phases,
                     const std::vector<MemoryPoint>& sweep = {});

}  // namespace adjd
