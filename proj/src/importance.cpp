#include "sforge/importance.hpp"

#include <cmath>

#include "sforge/parallel.hpp"

namespace sforge {

std::string_view layer_reduction_name(LayerReduction r) noexcept {
    return r == LayerReduction::SumOfBlocks ? "sum-of-blocks" : "concatenate";
}

std::optional<LayerReduction> parse_layer_reduction(std::string_view name) noexcept {
    if (name == "concatenate") return LayerReduction::Concatenate;
    if (name == "sum-of-blocks") return LayerReduction::SumOfBlocks;
    return std::nullopt;
}

UnimportanceVector unimportance(const ScoreSet& scores, Granularity granularity, Aggregator aggregator,
                                LayerReduction reduction) {
    struct Unit {
        std::size_t layer;
        std::optional<std::size_t> block;  // nullopt = whole layer
    };
    std::vector<Unit> units;
    UnimportanceVector out;
    out.granularity = granularity;
    out.aggregator = aggregator;
    for (std::size_t l = 0; l < scores.layers.size(); ++l) {
        const auto& layer = scores.layers[l];
        if (layer.blocks.empty()) {
            fail(Errc::EmptyLayer, "layer '" + layer.name + "' has no blocks");
        }
        if (granularity == Granularity::PerLayer) {
            units.push_back({l, std::nullopt});
            out.ids.push_back(layer.name);
            continue;
        }
        for (std::size_t b = 0; b < layer.blocks.size(); ++b) {
            units.push_back({l, b});
            out.ids.push_back(block_unit_id(layer.name, layer.blocks[b].name));
        }
    }

    out.values.assign(units.size(), 0.0);
    parallel_for(units.size(), [&](std::size_t u) {
        const auto& layer = scores.layers[units[u].layer];
        if (units[u].block) {
            out.values[u] = aggregate(layer.blocks[*units[u].block].scores.values, aggregator);
            return;
        }
        if (layer.blocks.size() == 1) {
            out.values[u] = aggregate(layer.blocks[0].scores.values, aggregator);
            return;
        }
        if (reduction == LayerReduction::SumOfBlocks) {
            double total = 0.0;
            for (const auto& block : layer.blocks) {
                total += aggregate(block.scores.values, aggregator);
            }
            out.values[u] = total;
            return;
        }
        std::vector<float> pooled;
        for (const auto& block : layer.blocks) {
            pooled.insert(pooled.end(), block.scores.values.begin(), block.scores.values.end());
        }
        out.values[u] = aggregate(pooled, aggregator);
    });
    return out;
}

ImportanceVector rid(const UnimportanceVector& s) {
    double total = 0.0;
    for (double v : s.values) {
        if (!std::isfinite(v)) {
            fail(Errc::NonFinite, "unimportance must be finite");
        }
        if (v < 0.0) {
            fail(Errc::NegativeScore, "unimportance must be >= 0");
        }
        total += v;
    }
    if (s.values.empty()) {
        fail(Errc::EmptyInput, "no units to rank");
    }
    if (total == 0.0) {
        fail(Errc::AllZeroUnimportance, "every unit has zero unimportance");
    }
    ImportanceVector out;
    out.granularity = s.granularity;
    out.ids = s.ids;
    out.values.reserve(s.values.size());
    for (double v : s.values) {
        out.values.push_back(1.0 - v / total);
    }
    return out;
}

}  // namespace sforge
