#pragma once

#include <cstddef>
#include <functional>

namespace fieldharm {

/// Worker count used by parallel_for; 0 means hardware concurrency.
void set_thread_count(unsigned count);
unsigned thread_count();

/// Runs body(i) for i in [0, n) on up to thread_count() threads. Each index is
/// visited exactly once; callers write results by index so the output never
/// depends on scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace fieldharm
