#pragma once

#include <algorithm>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace stsep {

/// Reductions over subjects are split into this many fixed partitions and
/// combined in partition order, so results do not depend on the thread count.
constexpr int kReductionChunks = 8;

struct ChunkRange {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
};

inline ChunkRange ChunkBounds(Eigen::Index n, int chunk) {
  const Eigen::Index lo = n * chunk / kReductionChunks;
  const Eigen::Index hi = n * (chunk + 1) / kReductionChunks;
  return {lo, hi};
}

/// Runs fn(chunk, range) for every partition of [0, n), spread over at most
/// `threads` workers.
template <class Fn>
void ForEachChunk(Eigen::Index n, int threads, Fn&& fn) {
  const int workers = std::clamp(threads, 1, kReductionChunks);
  if (workers == 1) {
    for (int c = 0; c < kReductionChunks; ++c) fn(c, ChunkBounds(n, c));
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int c = w; c < kReductionChunks; c += workers) fn(c, ChunkBounds(n, c));
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace stsep
