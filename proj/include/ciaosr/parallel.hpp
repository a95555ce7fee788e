#pragma once

#include <cstddef>
#include <functional>

namespace ciaosr {

/// Worker cap from CIAOSR_THREADS, else hardware concurrency (at least 1).
std::size_t worker_count();

/// Splits [0, n) into contiguous blocks, one per worker, and runs
/// body(begin, end) on each. Bodies must write disjoint outputs, so results
/// do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_block = 1);

}  // namespace ciaosr
