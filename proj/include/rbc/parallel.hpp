#pragma once

#include <cstddef>
#include <functional>

namespace rbc {

// Global worker-count knob. 0 means "hardware concurrency".
void set_thread_count(int threads) noexcept;
int thread_count() noexcept;

// Runs body(i) for i in [0, n). Work items are claimed dynamically, so any
// caller that needs determinism must write results into slot i only.
// Nested calls run serially on the calling worker. The first exception
// thrown by any item is rethrown on the calling thread after all workers
// have stopped.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace rbc
