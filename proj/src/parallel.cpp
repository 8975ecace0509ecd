#include "crowdcalib/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace crowdcalib {

std::size_t worker_threads()
{
    if (const char* env = std::getenv("CROWDCALIB_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) {
                return static_cast<std::size_t>(v);
            }
        } catch (const std::exception&) {
            // fall through to the hardware default
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

std::size_t chunk_count(std::size_t n, std::size_t workers) noexcept
{
    return std::max<std::size_t>(1, std::min(n, std::max<std::size_t>(1, workers)));
}

void parallel_chunks(std::size_t n, std::size_t workers,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body)
{
    const std::size_t chunks = chunk_count(n, workers);
    auto bounds = [&](std::size_t i) { return n * i / chunks; };
    if (chunks == 1) {
        body(0, n, 0);
        return;
    }
    std::vector<std::exception_ptr> errors(chunks);
    std::vector<std::thread> threads;
    threads.reserve(chunks - 1);
    for (std::size_t i = 1; i < chunks; ++i) {
        threads.emplace_back([&, i] {
            try {
                body(bounds(i), bounds(i + 1), i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    }
    try {
        body(bounds(0), bounds(1), 0);
    } catch (...) {
        errors[0] = std::current_exception();
    }
    for (auto& t : threads) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

} // namespace crowdcalib
