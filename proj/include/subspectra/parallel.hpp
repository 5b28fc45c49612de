#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace subspectra {

/// Worker cap: SUBSPECTRA_THREADS if set and positive, else hardware concurrency.
inline std::size_t worker_count()
{
    if (const char * env = std::getenv("SUBSPECTRA_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n > 0)
            return static_cast<std::size_t>(n);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(b) for every block b in [0, blocks). Each block must write only
/// its own output so the result is independent of the worker count.
template <typename Fn>
void parallel_blocks(std::size_t blocks, Fn && fn)
{
    const std::size_t workers = std::min(worker_count(), blocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b)
            fn(b);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t b = w; b < blocks; b += workers)
                    fn(b);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto & t : pool)
        t.join();
    for (auto & e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace subspectra
