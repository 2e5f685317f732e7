#pragma once

#include <functional>

namespace kinetic {

// Worker count: KINETIC_THREADS if set to a positive integer, otherwise the
// hardware concurrency (at least 1).
int thread_cap();

// Runs body(i) for i in [0, n) on up to thread_cap() threads. Work items are
// independent, so results do not depend on the thread count.
void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace kinetic
