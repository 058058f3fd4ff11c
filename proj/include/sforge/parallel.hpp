#pragma once

#include <cstddef>
#include <functional>

namespace sforge {

/// Worker threads used by the parallel kernels. Honors SPARSITY_FORGE_THREADS
/// (a positive integer cap); otherwise the hardware concurrency. Never below 1.
std::size_t worker_count();

/// Overrides worker_count() for the lifetime of the object (tests use this to
/// check that results do not depend on the thread count).
class ScopedWorkerCount {
public:
    explicit ScopedWorkerCount(std::size_t workers);
    ~ScopedWorkerCount();
    ScopedWorkerCount(const ScopedWorkerCount&) = delete;
    ScopedWorkerCount& operator=(const ScopedWorkerCount&) = delete;

private:
    std::size_t previous_;
};

/// Runs body(i) for every i in [0, count). Items are split into contiguous
/// ranges, one per worker; body must only write state owned by index i.
/// The first exception thrown by any item is rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace sforge
