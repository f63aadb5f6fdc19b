#pragma once

#include <functional>

#include "tsbc/linalg.hpp"

namespace tsbc {

// Worker count from TSBC_THREADS, else the hardware concurrency.
int default_workers();

// Runs fn(0..count-1) on up to `workers` threads. Each index is processed
// exactly once; the exception from the lowest failing index is rethrown.
void parallel_for(Index count, int workers, const std::function<void(Index)>& fn);

}  // namespace tsbc
