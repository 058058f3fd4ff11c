#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sforge/artifacts.hpp"
#include "sforge/stats.hpp"

namespace sforge {

/// How a multi-block layer is reduced at PerLayer granularity.
/// Concatenate applies the aggregator to the multiset of all entries of all
/// blocks; SumOfBlocks sums the per-block aggregates (experimental).
enum class LayerReduction { Concatenate, SumOfBlocks };

std::string_view layer_reduction_name(LayerReduction r) noexcept;
std::optional<LayerReduction> parse_layer_reduction(std::string_view name) noexcept;

/// Absolute unimportance S, one entry per allocation unit in model order.
struct UnimportanceVector {
    Granularity granularity = Granularity::PerLayer;
    Aggregator aggregator = Aggregator::Median;
    std::vector<std::string> ids;
    std::vector<double> values;
};

/// Relative importance I = 1 - S / sum(S), one entry per unit.
struct ImportanceVector {
    Granularity granularity = Granularity::PerLayer;
    std::vector<std::string> ids;
    std::vector<double> values;
};

/// Throws EmptyLayer for a layer without blocks. Units are aggregated in
/// parallel; results do not depend on the worker count.
UnimportanceVector unimportance(const ScoreSet& scores, Granularity granularity, Aggregator aggregator,
                                LayerReduction reduction = LayerReduction::Concatenate);

/// Throws AllZeroUnimportance when sum(S) == 0 and NonFinite / NegativeScore
/// on invalid entries.
ImportanceVector rid(const UnimportanceVector& s);

}  // namespace sforge
