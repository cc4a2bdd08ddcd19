#pragma once

#include <cstddef>
#include <functional>

namespace downgen {

/// Worker count: DOWNGEN_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Override the worker count for this process (0 restores the default).
void set_worker_count(std::size_t n);

/// Run fn(i) for i in [0, n). Each index runs exactly once; callers must only
/// write to per-index state so results do not depend on the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace downgen
