#pragma once

#include "tamperloc/types.hpp"

#include <functional>

namespace tamperloc {

// Worker cap. Starts from the TAMPERLOC_THREADS environment variable (or the
// hardware count, capped at 4) and can be overridden programmatically.
int max_workers();
void set_max_workers(int n);

// Splits [0, count) into contiguous chunks, one per worker. Every index is
// handled exactly once and each chunk's work must be self-contained, so
// results are bit-identical for any worker count.
void parallel_for(Index count, const std::function<void(Index begin, Index end)>& fn);

}  // namespace tamperloc
