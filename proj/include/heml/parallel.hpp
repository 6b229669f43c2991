#pragma once

#include <cstddef>
#include <functional>

namespace heml {

// Worker threads used for fan-out loops: hardware concurrency capped by the
// HEML_THREADS environment variable (HEML_THREADS=1 forces serial).
std::size_t worker_count(std::size_t jobs);

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; callers
// write results into per-index slots and reduce in index order afterwards, so
// the outcome does not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace heml
