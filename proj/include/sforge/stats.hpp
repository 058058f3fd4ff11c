#pragma once

#include <array>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace sforge {

/// Layer aggregators compared when turning a layer's scores into one number.
enum class Aggregator { Sum, Mean, Median, Max, Var, SD };

inline constexpr std::array<Aggregator, 6> kAllAggregators = {
    Aggregator::Sum, Aggregator::Mean, Aggregator::Median,
    Aggregator::Max, Aggregator::Var,  Aggregator::SD};

std::string_view aggregator_name(Aggregator kind) noexcept;
std::optional<Aggregator> parse_aggregator(std::string_view name) noexcept;

/// Summary statistic of a finite sequence.
///
/// Median of an even-length input is the mean of the two middle order
/// statistics. Var and SD are population statistics (divide by n).
/// Sums accumulate in double over fixed 4096-element chunks that are then
/// combined in chunk order, so the result does not depend on the number of
/// worker threads. Throws EmptyInput for n = 0 and NonFinite on NaN/Inf.
double aggregate(std::span<const float> values, Aggregator kind);

/// Deterministic double-precision sum used by aggregate(). Exposed for callers
/// that need the same summation order (e.g. pooled statistics).
double ordered_sum(std::span<const float> values);

/// Exact median by selection; matches the full-sort definition bit for bit.
double median(std::span<const float> values);

/// Indices of the k smallest scores, returned in ascending index order.
/// Ties go to the smaller flat index. Throws KOutOfRange when k > n and
/// NonFinite on NaN/Inf input.
template <std::floating_point T>
std::vector<std::size_t> rank_smallest(std::span<const T> scores, std::size_t k);

/// Throws NonFinite if any element is NaN or infinite.
template <std::floating_point T>
void require_finite(std::span<const T> values, std::string_view what);

}  // namespace sforge
