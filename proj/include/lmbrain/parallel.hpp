#pragma once

#include <cstddef>
#include <functional>

namespace lmbrain {

// Process-wide worker cap. Results never depend on it: every parallel loop
// writes to per-index slots and reductions happen afterwards in index order.
void set_num_threads(int n);
int num_threads();

// Runs body(i) for i in [0, n). Workers claim indices one at a time.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lmbrain
