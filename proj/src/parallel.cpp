#include "sforge/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <string_view>
#include <thread>
#include <vector>

namespace sforge {

namespace {

std::atomic<std::size_t> g_override{0};
// Set on worker threads so nested parallel_for calls run inline.
thread_local bool t_inside_worker = false;

std::size_t env_worker_cap() {
    const char* raw = std::getenv("SPARSITY_FORGE_THREADS");
    if (raw == nullptr) {
        return 0;
    }
    std::string_view text(raw);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        return 0;
    }
    return value;
}

}  // namespace

std::size_t worker_count() {
    if (std::size_t forced = g_override.load(); forced > 0) {
        return forced;
    }
    std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (std::size_t cap = env_worker_cap(); cap > 0) {
        return std::min(hw, cap);
    }
    return hw;
}

ScopedWorkerCount::ScopedWorkerCount(std::size_t workers)
    : previous_(g_override.exchange(std::max<std::size_t>(1, workers))) {}

ScopedWorkerCount::~ScopedWorkerCount() { g_override.store(previous_); }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = t_inside_worker ? 1 : std::min(worker_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }

    // One slot per range so the reported error is always the one with the
    // lowest item index, whatever the scheduling.
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    auto run_range = [&](std::size_t slot) {
        const bool was_inside = t_inside_worker;
        t_inside_worker = true;
        const std::size_t begin = slot * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        try {
            for (std::size_t i = begin; i < end; ++i) {
                body(i);
            }
        } catch (...) {
            errors[slot] = std::current_exception();
        }
        t_inside_worker = was_inside;
    };

    {
        std::vector<std::jthread> threads;
        threads.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) {
            threads.emplace_back(run_range, w);
        }
        run_range(0);
    }

    for (const auto& error : errors) {
        if (error) {
            std::rethrow_exception(error);
        }
    }
}

}  // namespace sforge
