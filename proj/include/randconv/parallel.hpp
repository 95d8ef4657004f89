#pragma once

#include <cstddef>
#include <functional>

namespace randconv {

// Process-wide worker count used by batch operations. 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs body(i) for i in [0, n). Iterations are distributed over thread_count()
// workers in contiguous blocks; body must only write to per-index state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace randconv
