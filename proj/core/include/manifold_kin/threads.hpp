#pragma once

#include <cstdint>
#include <functional>

namespace mkin {

/// Worker count: MANIFOLD_KIN_THREADS if set (clamped to [1, 256]),
/// otherwise the hardware concurrency.
int thread_count();

/// Runs fn(begin, end) over a partition of [0, n) on up to
/// thread_count() threads. Chunks are contiguous and the partition
/// depends only on n and the worker count, never on scheduling, so
/// callers that write to disjoint per-index slots stay deterministic.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace mkin
