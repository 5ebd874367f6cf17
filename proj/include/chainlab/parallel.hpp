#pragma once

#include <cstddef>
#include <functional>

namespace chainlab {

// Worker cap used by every parallel loop. 0 restores the default
// (std::thread::hardware_concurrency()).
void set_thread_count(unsigned count);
unsigned thread_count();

// Runs body(begin, end) over a static partition of [0, n). Each index is
// handled by exactly one call, so per-index outputs never depend on the
// number of threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace chainlab
