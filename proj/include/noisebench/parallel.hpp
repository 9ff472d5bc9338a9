#pragma once

#include <cstddef>
#include <functional>

namespace noisebench {

/// Maximum number of concurrently running tasks. Read from NOISEBENCH_WORKERS
/// when set, otherwise the hardware concurrency (at least 1).
std::size_t worker_limit();

/// Overrides the worker limit for the rest of the process; 0 restores the
/// environment/hardware default.
void set_worker_limit(std::size_t workers);

/// Runs fn(0..n-1). Tasks start on a new thread when a worker slot is free and
/// inline otherwise, so nested calls never oversubscribe. Results must be
/// written to per-index slots by the caller. The exception of the lowest
/// failing index is rethrown after all tasks finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace noisebench
