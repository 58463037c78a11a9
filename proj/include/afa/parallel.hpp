#pragma once

#include <cstddef>
#include <functional>

namespace afa {

/// Worker count: `requested` if non-zero, else AFA_THREADS, else the
/// hardware concurrency. Always at least 1.
std::size_t worker_count(std::size_t requested = 0);

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Each index runs
/// exactly once; results must be written to per-index slots. If any call
/// throws, remaining work is abandoned and the exception from the lowest
/// failing index is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace afa
