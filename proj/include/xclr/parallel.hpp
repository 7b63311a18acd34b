#pragma once

#include <cstddef>
#include <functional>

namespace xclr {

// Worker count: set_thread_count() override if any, else XCLR_THREADS, else hardware count.
std::size_t thread_count();
// 0 clears the override.
void set_thread_count(std::size_t n);

// Runs body(i) for i in [0, n) over contiguous chunks. Each index must write only to
// its own output slot; results are then independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace xclr
