#pragma once

// Brute-force reference implementations. Each follows the textbook
// definition as directly as possible and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <vector>

#include "sforge/model.hpp"

namespace oracle {

inline double median_by_sort(std::vector<float> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) {
        return v[n / 2];
    }
    return (static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2])) / 2.0;
}

/// k smallest by a stable full sort, as an ordered index set.
template <class T>
std::set<std::size_t> smallest_by_sort(const std::vector<T>& v, std::size_t k) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k)};
}

inline std::size_t round_half_up(double x) { return static_cast<std::size_t>(x + 0.5); }

/// Pruned flat indices of a model-wide threshold over concatenated blocks.
inline std::set<std::size_t> global_pruned(const std::vector<std::vector<float>>& blocks, double p) {
    std::vector<float> all;
    for (const auto& b : blocks) {
        all.insert(all.end(), b.begin(), b.end());
    }
    return smallest_by_sort(all, round_half_up(p * static_cast<double>(all.size())));
}

/// LAMP pruned set. Each layer is a list of weights; a weight's score is its
/// square over the sum of squares of every weight of the same layer that
/// sorts at or after it ((w^2, index) order).
inline std::set<std::size_t> lamp_pruned(const std::vector<std::vector<float>>& layers, double p) {
    std::vector<long double> scores;
    for (const auto& layer : layers) {
        for (std::size_t i = 0; i < layer.size(); ++i) {
            const long double wi = static_cast<long double>(layer[i]) * layer[i];
            long double denom = 0.0L;
            for (std::size_t j = 0; j < layer.size(); ++j) {
                const long double wj = static_cast<long double>(layer[j]) * layer[j];
                if (wj > wi || (wj == wi && j >= i)) {
                    denom += wj;
                }
            }
            scores.push_back(denom > 0.0L ? wi / denom : 0.0L);
        }
    }
    return smallest_by_sort(scores, round_half_up(p * static_cast<double>(scores.size())));
}

/// Kept positions of one N:M group: N rounds of "take the first maximum of
/// what is left".
inline std::set<std::size_t> nm_group_kept(const std::vector<float>& group, std::size_t n) {
    std::set<std::size_t> kept;
    for (std::size_t round = 0; round < n; ++round) {
        std::size_t best = group.size();
        for (std::size_t i = 0; i < group.size(); ++i) {
            if (kept.count(i) == 0 && (best == group.size() || group[i] > group[best])) {
                best = i;
            }
        }
        kept.insert(best);
    }
    return kept;
}

/// Neumaier-compensated sum.
inline double compensated_sum(const std::vector<double>& v) {
    double sum = 0.0;
    double c = 0.0;
    for (double x : v) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    return sum + c;
}

/// Row-major product of two matrices.
inline sforge::Matrix matmul(const sforge::Matrix& a, const sforge::Matrix& b) {
    sforge::Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) {
                acc += static_cast<double>(a(i, k)) * b(k, j);
            }
            out(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

}  // namespace oracle
