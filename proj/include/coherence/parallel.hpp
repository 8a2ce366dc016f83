#pragma once

#include <cstddef>
#include <functional>

namespace coherence {

/// Worker count: `requested` if nonzero, else hardware concurrency; always
/// capped by the COHERENCE_THREADS environment variable when it is set.
std::size_t worker_count(std::size_t requested = 0);

/// Runs body(i) for i in [0, n) on up to `workers` threads. Exceptions from
/// the body are rethrown on the calling thread (first one wins).
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& body);

}  // namespace coherence
