#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace lddmm {

/// 0 means "one per hardware thread".
inline std::size_t resolve_threads(std::size_t requested) {
    if (requested != 0) { return requested; }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Every index is
/// visited exactly once; if any call throws, the exception of the lowest
/// failing index is rethrown after all workers have joined, so the reported
/// error does not depend on scheduling.
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body &&body) {
    const std::size_t workers = std::min(resolve_threads(threads), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) { body(i); }
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) { pool.emplace_back(worker); }
    worker();
    pool.clear();
    for (auto &e : errors) {
        if (e) { std::rethrow_exception(e); }
    }
}

}  // namespace lddmm
