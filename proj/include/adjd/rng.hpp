#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

namespace adjd {

/// Counter-based generator (Philox4x32-10). A stream is identified by a
/// 64-bit key; draws are a pure function of (key, counter), so any position
/// of a stream can be reproduced without replaying it.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  /// Key for an independent stream derived from `seed` and a text label.
  /// Adding new labels never perturbs existing streams.
  static std::uint64_t derive(std::uint64_t seed, std::string_view label);
  Rng substream(std::string_view label) const { return Rng(derive(key_, label)); }

  std::uint64_t next_u64();
  /// Uniform in (0, 1]; never returns 0 so log() is safe.
  double uniform();
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t ctr) const;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int buf_pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace adjd
