#pragma once

#include <cstddef>
#include <functional>

namespace crowdcalib {

/// Worker thread cap: CROWDCALIB_THREADS if set and positive, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_threads();

/// Splits [0, n) into at most `workers` contiguous chunks and runs
/// `body(begin, end, chunk_index)` for each, one thread per chunk. Chunk
/// boundaries depend only on (n, workers). Exceptions from workers are
/// rethrown on the calling thread (first chunk index wins).
void parallel_chunks(std::size_t n, std::size_t workers,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

/// Number of chunks parallel_chunks will create.
std::size_t chunk_count(std::size_t n, std::size_t workers) noexcept;

} // namespace crowdcalib
