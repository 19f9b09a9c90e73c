#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace oemb {

/// Worker cap: OEMB_THREADS if set and positive, else the hardware count.
inline std::size_t thread_count() {
    if (const char* env = std::getenv("OEMB_THREADS")) {
        try {
            const long n = std::stol(env);
            if (n > 0) {
                return static_cast<std::size_t>(n);
            }
        } catch (...) {
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace detail {
inline thread_local bool in_worker = false;
}

/// Splits [0, n) into `chunks` contiguous ranges and runs fn(chunk, begin, end)
/// for each, one thread per chunk. Chunk boundaries depend only on n and
/// `chunks`, so per-chunk results can be reduced in a fixed order.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t chunks, Fn&& fn) {
    chunks = std::max<std::size_t>(1, std::min(chunks, n));
    auto bounds = [&](std::size_t c) { return std::pair{n * c / chunks, n * (c + 1) / chunks}; };
    if (chunks == 1 || detail::in_worker) {
        // nested calls run their chunks inline
        for (std::size_t c = 0; c < chunks; ++c) {
            auto [b, e] = bounds(c);
            fn(c, b, e);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(chunks);
    std::vector<std::thread> workers;
    workers.reserve(chunks);
    for (std::size_t c = 0; c < chunks; ++c) {
        workers.emplace_back([&, c] {
            detail::in_worker = true;
            try {
                auto [b, e] = bounds(c);
                fn(c, b, e);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) {
        w.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    parallel_chunks(n, thread_count(), [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            fn(i);
        }
    });
}

}  // namespace oemb
