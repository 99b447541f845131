#pragma once

// Minimal data-parallel loop used by dataset generation and per-edge
// training. Work items must be independent and write only to their own
// slots, which keeps every result identical no matter how many workers run.

#include <functional>

namespace formnet {

// Worker cap: FORMNET_THREADS when set (clamped at >= 1), otherwise the
// hardware concurrency.
int thread_count();

// Runs fn(0) ... fn(n-1), spreading indices over up to `n_threads` workers
// (0 means thread_count()). If any call throws, the exception with the
// lowest index is rethrown after all workers finish.
void parallel_for(int n, const std::function<void(int)>& fn,
                  int n_threads = 0);

}  // namespace formnet
