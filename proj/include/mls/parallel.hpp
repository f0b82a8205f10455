#pragma once

#include <thread>
#include <vector>

#include "mls/errors.hpp"

namespace mls {

/// Split [0, total) into contiguous chunks, run `body(partial, begin, end)`
/// per chunk, and leave one partial per chunk in `partials` (chunk order).
/// With threads <= 1 this is a plain serial loop: callers that reduce the
/// partials in order get bit-identical serial results.
template <typename Partial, typename Body>
void parallel_chunks(int total, int threads, std::vector<Partial>& partials, Body&& body) {
    if (threads < 1) throw ConfigError("threads must be >= 1");
    const int n = std::max(1, std::min(threads, total == 0 ? 1 : total));
    partials.assign(n, Partial{});
    if (n == 1) {
        body(partials[0], 0, total);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(n);
    const int chunk = (total + n - 1) / n;
    for (int t = 0; t < n; ++t) {
        const int begin = t * chunk;
        const int end = std::min(total, begin + chunk);
        pool.emplace_back([&, t, begin, end] { body(partials[t], begin, end); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace mls
