#pragma once

#include <cstddef>
#include <functional>

namespace copp {

/// Worker count: COPP_NUM_THREADS when set (>= 1), else hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Each index writes only its own output slot,
/// so results do not depend on the thread count. The first exception thrown
/// (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace copp
