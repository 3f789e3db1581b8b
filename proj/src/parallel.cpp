#include "pxfb/parallel.hpp"

#include <algorithm>

namespace pxfb::par {

namespace {
int g_threads = 1;
}

void set_threads(int n) { g_threads = std::max(1, n); }
int threads() { return g_threads; }

void map(std::int64_t count, const std::function<double(std::int64_t)>& fn,
         std::vector<double>& out) {
  out.resize(static_cast<size_t>(count));
  const int nt = std::min<std::int64_t>(g_threads, std::max<std::int64_t>(count, 1));
  if (nt <= 1) {
    for (std::int64_t i = 0; i < count; ++i) out[static_cast<size_t>(i)] = fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(nt));
  const std::int64_t chunk = (count + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    const std::int64_t begin = t * chunk;
    const std::int64_t end = std::min(count, begin + chunk);
    workers.emplace_back([&, begin, end] {
      for (std::int64_t i = begin; i < end; ++i)
        out[static_cast<size_t>(i)] = fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

std::int64_t argmin(std::int64_t count, const std::function<double(std::int64_t)>& fn,
                    std::vector<double>* values_out) {
  std::vector<double> local;
  std::vector<double>& vals = values_out ? *values_out : local;
  map(count, fn, vals);
  std::int64_t best = 0;
  for (std::int64_t i = 1; i < count; ++i)
    if (vals[static_cast<size_t>(i)] < vals[static_cast<size_t>(best)]) best = i;
  return best;
}

}  // namespace pxfb::par
