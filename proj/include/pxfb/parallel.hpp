#pragma once

// Deterministic chunked parallelism. Work is split into fixed chunks; chunk
// results are merged in chunk order, so results are bitwise independent of the
// thread count.

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace pxfb::par {

void set_threads(int n);
int threads();

// Evaluates fn(i) for i in [0, count) and returns the index of the minimal
// value; ties resolve to the smallest index. Values are computed into a dense
// buffer (chunked across threads), so the reduction order is fixed.
std::int64_t argmin(std::int64_t count, const std::function<double(std::int64_t)>& fn,
                    std::vector<double>* values_out = nullptr);

// Fills out[i] = fn(i), chunked across threads.
void map(std::int64_t count, const std::function<double(std::int64_t)>& fn,
         std::vector<double>& out);

}  // namespace pxfb::par
