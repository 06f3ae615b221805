#pragma once

#include <cstdint>
#include <functional>

namespace signspot {

// Global worker count for parallel_for. 0 restores the hardware default.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, count) on up to num_threads() workers using a
// static block partition. Tasks must write to disjoint locations; under
// that contract results are bit-identical for any thread count, since
// each index is computed start-to-finish by a single worker.
// Nested calls from inside a worker run serially.
void parallel_for(int64_t count, const std::function<void(int64_t)>& fn);

// True when the caller is already inside a parallel_for worker.
bool in_parallel_worker();

}  // namespace signspot
