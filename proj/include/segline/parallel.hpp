#pragma once

#include <cstddef>
#include <functional>

namespace segline {

// Worker cap from SEGLINE_THREADS (0 or unset = hardware concurrency).
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
// write results into pre-sized slots so output order never depends on
// scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace segline
