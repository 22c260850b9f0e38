#include "adjd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "adjd/errors.hpp"
#include "adjd/rng.hpp"

namespace adjd {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void MetricsTable::add(std::vector<double> row) {
  if (row.size() != columns.size())
    throw ArgumentError("metrics: row has " + std::to_string(row.size()) + " values for " +
                        std::to_string(columns.size()) + " columns");
  rows.push_back(std::move(row));
}

std::string MetricsTable::csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + fmt(r[i]);
    out += '\n';
  }
  return out;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("wasserstein_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Integrate |Qa(q) - Qb(q)| over q in (0,1); both quantile functions are
  // piecewise constant with breaks at i/n and j/m.
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double q = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double qa = static_cast<double>(i + 1) / n, qb = static_cast<double>(j + 1) / m;
    const double next = std::min(qa, qb);
    total += (next - q) * std::abs(a[i] - b[j]);
    q = next;
    if (qa <= next) ++i;
    if (qb <= next) ++j;
  }
  return total;
}

double sliced_wasserstein(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int n_projections,
                          std::uint64_t seed) {
  if (a.cols() == 0 || b.cols() == 0) throw ArgumentError("sliced_wasserstein: empty sample set");
  if (a.rows() != b.rows()) throw ArgumentError("sliced_wasserstein: dimension mismatch");
  if (n_projections < 1) throw ArgumentError("sliced_wasserstein: need at least one projection");
  Rng rng(Rng::derive(seed, "sliced_wasserstein"));
  double total = 0.0;
  for (int p = 0; p < n_projections; ++p) {
    Eigen::VectorXd u = rng.normal_matrix(a.rows(), 1).col(0);
    const double norm = u.norm();
    if (norm == 0.0) u.setUnit(0); else u /= norm;
    const Eigen::VectorXd pa = a.transpose() * u, pb = b.transpose() * u;
    total += wasserstein_1d({pa.data(), pa.data() + pa.size()}, {pb.data(), pb.data() + pb.size()});
  }
  return total / n_projections;
}

SuccessTable success_ratio(const std::vector<bool>& flags, const std::vector<long>& groups) {
  if (flags.empty()) throw ArgumentError("success_ratio: empty input");
  if (groups.size() != flags.size())
    throw ArgumentError("success_ratio: one group label per flag required");
  std::map<long, std::pair<long, long>> acc;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    auto& [s, t] = acc[groups[i]];
    s += flags[i];
    ++t;
  }
  SuccessTable out;
  for (const auto& [g, st] : acc) {
    out.groups.push_back({g, st.first, st.second,
                          static_cast<double>(st.first) / static_cast<double>(st.second)});
    out.successes += st.first;
    out.total += st.second;
  }
  out.overall = static_cast<double>(out.successes) / static_cast<double>(out.total);
  return out;
}

std::string SuccessTable::csv() const {
  std::string out = "group,successes,total,ratio\n";
  for (const auto& g : groups)
    out += std::to_string(g.group) + ',' + std::to_string(g.successes) + ',' +
           std::to_string(g.total) + ',' + fmt(g.ratio) + '\n';
  out += "all," + std::to_string(successes) + ',' + std::to_string(total) + ',' + fmt(overall) + '\n';
  return out;
}

RunReport run_report(const std::vector<PhaseStats>& phases, const std::vector<MemoryPoint>& sweep) {
  RunReport r;
  r.phases = phases;
  r.sweep = sweep;
  for (const auto& p : phases) r.total_nfe += p.nfe;
  if (!sweep.empty()) {
    r.adjoint_constant = std::all_of(sweep.begin(), sweep.end(), [&](const MemoryPoint& m) {
      return m.adjoint_peak == sweep.front().adjoint_peak;
    });
    bool any = false, linear = true;
    for (const auto& m : sweep) {
      if (m.naive_peak < 0) continue;
      any = true;
      linear = linear && m.naive_peak == m.steps + 1;
    }
    if (any) r.naive_linear = linear;
  }
  return r;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["total_nfe"] = total_nfe;
  j["phases"] = nlohmann::json::array();
  for (const auto& p : phases)
    j["phases"].push_back({{"phase", p.phase},
                           {"nfe", p.nfe},
                           {"peak_retained_states", p.peak_retained},
                           {"seconds", p.seconds}});
  if (!sweep.empty()) {
    auto& s = j["memory_sweep"] = nlohmann::json::array();
    for (const auto& m : sweep) {
      nlohmann::json row{{"steps", m.steps}, {"adjoint_peak", m.adjoint_peak}};
      if (m.naive_peak >= 0) row["naive_peak"] = m.naive_peak;
      s.push_back(row);
    }
  }
  if (adjoint_constant) j["adjoint_memory"] = {{"O(1)", *adjoint_constant}};
  if (naive_linear) j["naive_memory"] = {{"O(N)", *naive_linear}};
  if (!extra.empty()) j["extra"] = extra;
  return j;
}

}  // namespace adjd
