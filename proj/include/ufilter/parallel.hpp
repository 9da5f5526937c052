#pragma once

#include <cstddef>
#include <functional>

namespace ufilter {

/// Name of the environment variable holding the default worker count.
inline constexpr const char* kThreadsEnvVar = "UFILTER_THREADS";

/// Sets the number of workers used by parallel_for; 0 restores the default
/// (UFILTER_THREADS if set, else the hardware concurrency).
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks only write
/// to disjoint output slots, so results never depend on the worker count.
/// Calls made from inside a worker run serially. The exception of the lowest
/// failing chunk is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace ufilter
