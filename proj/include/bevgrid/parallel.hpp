#pragma once

#include <cstddef>
#include <functional>

namespace bevgrid {

// 0 means "all hardware threads"; the result is always >= 1.
int resolve_threads(int requested);

// Splits [0, n) into at most `threads` contiguous chunks and runs fn(begin,
// end) on each. Every index is visited by exactly one worker, so callers that
// own disjoint outputs per index get results independent of the thread count.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace bevgrid
