#pragma once

#include <cstddef>
#include <functional>

namespace lsalign {

// Worker cap from LABELSPACE_ALIGN_THREADS. 0 or 1 means run inline on the
// calling thread; unset means hardware concurrency.
std::size_t thread_count();

// Calls body(i) for i in [0, n). Each index is visited exactly once; bodies must
// only write to slots owned by their index, so results never depend on the
// worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lsalign
