#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace upl {

// Runs f(i) for i in [0, n) across at most `jobs` threads. Callers write
// results into index i of a pre-sized buffer, so output order never depends
// on scheduling. Exceptions are rethrown on the calling thread.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& f) {
    if (n == 0) return;
    std::size_t workers = jobs <= 1 ? 1 : std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> threads;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace upl
