#pragma once

#include <cstddef>
#include <functional>

namespace convscope {

// Worker count used by parallel_for. 0 selects hardware concurrency.
void set_thread_count(int n);
int thread_count();

// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is owned
// by exactly one worker and every per-element reduction keeps a fixed
// iteration order, so results are bit-identical for any worker count.
void parallel_for(size_t n, const std::function<void(size_t, size_t)>& fn);

}  // namespace convscope
