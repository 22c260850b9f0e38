#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace adjd {

/// Worker cap from ADJD_THREADS (default 1, invalid values fall back to 1).
std::size_t worker_threads();

struct Chunk {
  Eigen::Index begin;
  Eigen::Index count;
};

inline constexpr Eigen::Index kChunkColumns = 64;

/// Contiguous column ranges of kChunkColumns (the last may be shorter);
/// a single chunk when `splittable` is false.
std::vector<Chunk> batch_chunks(Eigen::Index batch, bool splittable);

/// Runs fn(0..n-1) on up to worker_threads() threads. Exceptions are
/// rethrown in index order after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace adjd
