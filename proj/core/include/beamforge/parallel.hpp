#pragma once

#include <cstddef>
#include <functional>

namespace beamforge {

/// Worker count from BEAMFORGE_THREADS (0 or unset = hardware concurrency).
std::size_t worker_count();

/// Runs fn(begin, end) over [0, n) split into fixed chunks of `chunk` items.
/// Chunk boundaries do not depend on the worker count, so callers that
/// reduce per-chunk results in chunk order get bitwise-identical output
/// regardless of BEAMFORGE_THREADS.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t)> &fn);

/// Number of chunks parallel_chunks will produce.
constexpr std::size_t chunk_count(std::size_t n, std::size_t chunk) {
  return chunk == 0 ? 0 : (n + chunk - 1) / chunk;
}

} // namespace beamforge
