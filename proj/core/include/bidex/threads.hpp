#pragma once

#include <cstddef>
#include <functional>

namespace bidex {

/// Worker cap: BIDEX_THREADS when set, otherwise the hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n), splitting contiguous ranges across workers.
/// Each index is processed exactly once; callers keep writes disjoint per
/// index, so results are independent of the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace bidex
