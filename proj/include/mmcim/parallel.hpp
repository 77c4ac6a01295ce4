#pragma once
#include <functional>

namespace mmcim {

// worker count used by parallel_for: hardware concurrency, capped by the
// MMC_MODES_THREADS environment variable when it parses to a positive integer
int worker_count();

// runs fn(i) for every i in [0, n) across workers; the first exception thrown
// by any fn is rethrown on the calling thread after all workers join
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace mmcim
