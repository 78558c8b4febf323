#ifndef CELLCONTRAST_PARALLEL_HPP
#define CELLCONTRAST_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace cellcontrast {

/// Worker cap: CELLCONTRAST_THREADS if set (minimum 1), else the hardware concurrency.
std::size_t worker_count();

/**
 * Runs `fn(i)` for every i in [0, n), split into contiguous chunks across
 * at most `worker_count()` threads. `fn` must only touch per-index state.
 */
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}

#endif
