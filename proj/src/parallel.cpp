#include "adjd/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>

namespace adjd {

std::size_t worker_threads() {
  const char* env = std::getenv("ADJD_THREADS");
  if (!env) return 1;
  try {
    const long v = std::stol(env);
    return v >= 1 ? static_cast<std::size_t>(v) : 1;
  } catch (...) {
    return 1;
  }
}

std::vector<Chunk> batch_chunks(Eigen::Index batch, bool splittable) {
  // Fixed width, independent of the worker count, so reductions over chunks
  // (and therefore every output) are identical for any ADJD_THREADS.
  const Eigen::Index width = splittable ? kChunkColumns : std::max<Eigen::Index>(batch, 1);
  std::vector<Chunk> chunks;
  for (Eigen::Index begin = 0; begin < batch || chunks.empty(); begin += width)
    chunks.push_back({begin, std::min(width, batch - begin)});
  return chunks;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace adjd
