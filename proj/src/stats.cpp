#include "sforge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sforge/error.hpp"
#include "sforge/parallel.hpp"

namespace sforge {

namespace {

constexpr std::size_t kChunk = 4096;
// Below this many chunks the thread start-up costs more than it saves.
constexpr std::size_t kParallelChunks = 16;

template <class ChunkFn>
double chunked_sum(std::size_t n, ChunkFn&& chunk_sum) {
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(chunks, 0.0);
    auto fill = [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        partial[c] = chunk_sum(begin, std::min(n, begin + kChunk));
    };
    if (chunks >= kParallelChunks) {
        parallel_for(chunks, fill);
    } else {
        for (std::size_t c = 0; c < chunks; ++c) {
            fill(c);
        }
    }
    double total = 0.0;
    for (double p : partial) {
        total += p;
    }
    return total;
}

double population_variance(std::span<const float> values) {
    const double mean = ordered_sum(values) / static_cast<double>(values.size());
    return chunked_sum(values.size(), [&](std::size_t b, std::size_t e) {
               double acc = 0.0;
               for (std::size_t i = b; i < e; ++i) {
                   const double d = static_cast<double>(values[i]) - mean;
                   acc += d * d;
               }
               return acc;
           }) /
           static_cast<double>(values.size());
}

}  // namespace

std::string_view aggregator_name(Aggregator kind) noexcept {
    switch (kind) {
        case Aggregator::Sum: return "sum";
        case Aggregator::Mean: return "mean";
        case Aggregator::Median: return "median";
        case Aggregator::Max: return "max";
        case Aggregator::Var: return "var";
        case Aggregator::SD: return "sd";
    }
    return "median";
}

std::optional<Aggregator> parse_aggregator(std::string_view name) noexcept {
    for (Aggregator kind : kAllAggregators) {
        if (aggregator_name(kind) == name) {
            return kind;
        }
    }
    return std::nullopt;
}

template <std::floating_point T>
void require_finite(std::span<const T> values, std::string_view what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            fail(Errc::NonFinite,
                 std::string(what) + ": non-finite value at index " + std::to_string(i));
        }
    }
}

template void require_finite<float>(std::span<const float>, std::string_view);
template void require_finite<double>(std::span<const double>, std::string_view);

double ordered_sum(std::span<const float> values) {
    return chunked_sum(values.size(), [&](std::size_t b, std::size_t e) {
        double acc = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            acc += static_cast<double>(values[i]);
        }
        return acc;
    });
}

double median(std::span<const float> values) {
    if (values.empty()) {
        fail(Errc::EmptyInput, "median of an empty sequence");
    }
    require_finite(values, "median");
    std::vector<float> work(values.begin(), values.end());
    const std::size_t n = work.size();
    const auto upper = work.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(work.begin(), upper, work.end());
    const double hi = *upper;
    // `+ 0.0` folds -0 into +0 so the result is independent of input order.
    if (n % 2 == 1) {
        return hi + 0.0;
    }
    // Everything left of `upper` is <= it; the lower middle is their maximum.
    const double lo = *std::max_element(work.begin(), upper);
    return (lo + hi) / 2.0 + 0.0;
}

double aggregate(std::span<const float> values, Aggregator kind) {
    if (values.empty()) {
        fail(Errc::EmptyInput, "aggregate over an empty sequence");
    }
    if (kind == Aggregator::Median) {
        return median(values);
    }
    require_finite(values, "aggregate");
    const auto n = static_cast<double>(values.size());
    switch (kind) {
        case Aggregator::Sum: return ordered_sum(values);
        case Aggregator::Mean: return ordered_sum(values) / n;
        case Aggregator::Median: break;
        case Aggregator::Max:
            return static_cast<double>(*std::max_element(values.begin(), values.end())) + 0.0;
        case Aggregator::Var: return population_variance(values);
        case Aggregator::SD: return std::sqrt(population_variance(values));
    }
    return 0.0;
}

template <std::floating_point T>
std::vector<std::size_t> rank_smallest(std::span<const T> scores, std::size_t k) {
    const std::size_t n = scores.size();
    if (k > n) {
        fail(Errc::KOutOfRange,
             "k = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
    }
    require_finite(scores, "rank_smallest");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (k == 0) {
        return {};
    }
    if (k < n) {
        // (score, index) is a strict total order, so the selected set is unique.
        auto less = [&](std::size_t a, std::size_t b) {
            return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
        };
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                         order.end(), less);
        order.resize(k);
        std::sort(order.begin(), order.end());
    }
    return order;
}

template std::vector<std::size_t> rank_smallest<float>(std::span<const float>, std::size_t);
template std::vector<std::size_t> rank_smallest<double>(std::span<const double>, std::size_t);

}  // namespace sforge
