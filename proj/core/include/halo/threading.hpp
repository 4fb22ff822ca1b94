#pragma once

#include <functional>

namespace halo {

// Worker count: HALO_NUM_THREADS if set (clamped to >= 1), else
// hardware concurrency.
int worker_thread_count();

// Runs fn(block) for block in [0, num_blocks). Blocks may execute on
// different threads; each must write only to its own outputs. Callers that
// reduce across blocks must combine in block order, which keeps every
// floating-point reduction independent of the worker count.
void parallel_for_blocks(int num_blocks, const std::function<void(int)>& fn);

}  // namespace halo
