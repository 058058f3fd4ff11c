#include "sforge/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "sforge/parallel.hpp"
#include "sforge/stats.hpp"

namespace sforge {

namespace {

void require_sparsity(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        fail(Errc::InvalidArgument, "sparsity must lie in [0, 1], got " + std::to_string(p));
    }
}

struct BlockRef {
    std::size_t layer;
    std::size_t block;
};

template <class Layered>
std::vector<BlockRef> block_refs(const Layered& layered) {
    std::vector<BlockRef> refs;
    for (std::size_t l = 0; l < layered.layers.size(); ++l) {
        for (std::size_t b = 0; b < layered.layers[l].blocks.size(); ++b) {
            refs.push_back({l, b});
        }
    }
    return refs;
}

/// All-keep masks shaped like `scores`.
MaskSet keep_all(const ScoreSet& scores) {
    MaskSet out;
    for (const auto& layer : scores.layers) {
        LayerMasks lm;
        lm.name = layer.name;
        for (const auto& block : layer.blocks) {
            lm.blocks.push_back(BlockMask::filled(block.name, block.scores.rows, block.scores.cols, true));
        }
        out.layers.push_back(std::move(lm));
    }
    return out;
}

MaskSet keep_all(const Model& model) {
    MaskSet out;
    for (const auto& layer : model.layers) {
        LayerMasks lm;
        lm.name = layer.name;
        for (const auto& block : layer.blocks) {
            lm.blocks.push_back(BlockMask::filled(block.name, block.weights.rows, block.weights.cols, true));
        }
        out.layers.push_back(std::move(lm));
    }
    return out;
}

/// Clears the flat (model-wide) indices in `pruned`, given each block's
/// starting offset.
void clear_flat(MaskSet& masks, const std::vector<BlockRef>& refs, const std::vector<std::size_t>& offsets,
                const std::vector<std::size_t>& pruned) {
    std::size_t r = 0;
    for (std::size_t flat : pruned) {
        while (flat >= offsets[r + 1]) {
            ++r;
        }
        masks.layers[refs[r].layer].blocks[refs[r].block].set(flat - offsets[r], false);
    }
    for (auto& layer : masks.layers) {
        for (auto& block : layer.blocks) {
            block.recount();
        }
    }
}

}  // namespace

std::string_view scope_name(SelectionScope s) noexcept {
    switch (s) {
        case SelectionScope::PerOutputRow: return "per-output";
        case SelectionScope::WholeMatrix: return "whole-matrix";
        case SelectionScope::GlobalAcrossModel: return "global";
    }
    return "per-output";
}

std::optional<SelectionScope> parse_scope(std::string_view name) noexcept {
    if (name == "per-output") return SelectionScope::PerOutputRow;
    if (name == "whole-matrix") return SelectionScope::WholeMatrix;
    if (name == "global") return SelectionScope::GlobalAcrossModel;
    return std::nullopt;
}

std::size_t prune_count(double ratio, std::size_t n) noexcept {
    const double k = std::floor(ratio * static_cast<double>(n) + 0.5);
    return std::min(n, static_cast<std::size_t>(std::max(0.0, k)));
}

MaskSet prune_unstructured(const ScoreSet& scores, const Allocation& alloc, SelectionScope scope) {
    if (scope == SelectionScope::GlobalAcrossModel) {
        fail(Errc::InvalidArgument, "global scope ignores allocations; use prune_global");
    }
    const auto ratios = alloc.ratios_for(scores);
    const auto unit_of = block_units(scores, alloc.granularity);
    const auto refs = block_refs(scores);
    MaskSet out = keep_all(scores);

    parallel_for(refs.size(), [&](std::size_t r) {
        const Matrix& s = scores.layers[refs[r].layer].blocks[refs[r].block].scores;
        BlockMask& mask = out.layers[refs[r].layer].blocks[refs[r].block];
        const double ratio = ratios[unit_of[r]];
        if (scope == SelectionScope::WholeMatrix) {
            for (std::size_t flat : rank_smallest<float>(s.values, prune_count(ratio, s.size()))) {
                mask.set(flat, false);
            }
        } else {
            const std::size_t k = prune_count(ratio, s.cols);
            for (std::size_t i = 0; i < s.rows; ++i) {
                for (std::size_t j : rank_smallest<float>(s.row(i), k)) {
                    mask.set(i * s.cols + j, false);
                }
            }
        }
        mask.recount();
    });
    return out;
}

MaskSet prune_global(const ScoreSet& scores, double sparsity) {
    require_sparsity(sparsity);
    const auto refs = block_refs(scores);
    std::vector<std::size_t> offsets{0};
    std::vector<float> all;
    for (const auto& [l, b] : refs) {
        const auto& v = scores.layers[l].blocks[b].scores.values;
        all.insert(all.end(), v.begin(), v.end());
        offsets.push_back(all.size());
    }
    MaskSet out = keep_all(scores);
    clear_flat(out, refs, offsets, rank_smallest<float>(all, prune_count(sparsity, all.size())));
    return out;
}

namespace {

/// LAMP scores in double, flattened in model order.
std::vector<double> lamp_flat(const Model& model, Granularity granularity) {
    const auto unit_of = block_units(model, granularity);
    std::vector<double> squares;
    std::vector<std::size_t> unit_begin;
    std::size_t current = static_cast<std::size_t>(-1);
    std::size_t r = 0;
    for (const auto& layer : model.layers) {
        for (const auto& block : layer.blocks) {
            if (unit_of[r++] != current) {
                current = unit_of[r - 1];
                unit_begin.push_back(squares.size());
            }
            for (float w : block.weights.values) {
                squares.push_back(static_cast<double>(w) * w);
            }
        }
    }
    unit_begin.push_back(squares.size());

    std::vector<double> out(squares.size(), 0.0);
    parallel_for(unit_begin.size() - 1, [&](std::size_t u) {
        const std::size_t begin = unit_begin[u];
        const std::size_t end = unit_begin[u + 1];
        std::vector<std::size_t> order(end - begin);
        std::iota(order.begin(), order.end(), begin);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return squares[a] < squares[b] || (squares[a] == squares[b] && a < b);
        });
        double suffix = 0.0;
        for (std::size_t i = order.size(); i-- > 0;) {
            suffix += squares[order[i]];
            out[order[i]] = suffix > 0.0 ? squares[order[i]] / suffix : 0.0;
        }
    });
    return out;
}

}  // namespace

ScoreSet lamp_scores(const Model& model, Granularity granularity) {
    const auto flat = lamp_flat(model, granularity);
    ScoreSet out;
    std::size_t pos = 0;
    for (const auto& layer : model.layers) {
        LayerScores ls;
        ls.name = layer.name;
        for (const auto& block : layer.blocks) {
            BlockScores bs{block.name, Matrix(block.weights.rows, block.weights.cols)};
            for (float& v : bs.scores.values) {
                v = static_cast<float>(flat[pos++]);
            }
            ls.blocks.push_back(std::move(bs));
        }
        out.layers.push_back(std::move(ls));
    }
    return out;
}

MaskSet prune_lamp(const Model& model, double sparsity, Granularity granularity) {
    require_sparsity(sparsity);
    const auto scores = lamp_flat(model, granularity);
    const auto refs = block_refs(model);
    std::vector<std::size_t> offsets{0};
    for (const auto& [l, b] : refs) {
        offsets.push_back(offsets.back() + model.layers[l].blocks[b].weights.size());
    }
    MaskSet out = keep_all(model);
    clear_flat(out, refs, offsets, rank_smallest<double>(scores, prune_count(sparsity, scores.size())));
    return out;
}

MaskSet prune_nm(const ScoreSet& scores, const NMScheme& scheme) {
    const std::size_t m = scheme.group;
    if (m == 0) {
        fail(Errc::InvalidArgument, "N:M group size must be positive");
    }
    if (scheme.units.size() != scheme.kept.size()) {
        fail(Errc::FormatError, "N:M scheme lists " + std::to_string(scheme.units.size()) +
                                    " units but " + std::to_string(scheme.kept.size()) + " N values");
    }
    // Reuse the allocation coverage checks on the unit list.
    Allocation shape;
    shape.granularity = scheme.granularity;
    for (std::size_t u = 0; u < scheme.units.size(); ++u) {
        if (scheme.kept[u] < 1 || scheme.kept[u] > m) {
            fail(Errc::InvalidArgument, "N of unit '" + scheme.units[u] + "' must lie in [1, M]");
        }
        shape.units.push_back({scheme.units[u], 0.0, std::nullopt});
    }
    const auto ids = unit_ids(scores, scheme.granularity);
    shape.validate_against(scores);
    std::unordered_map<std::string, std::size_t> n_of;
    for (std::size_t u = 0; u < scheme.units.size(); ++u) {
        n_of.emplace(scheme.units[u], scheme.kept[u]);
    }

    const auto unit_of = block_units(scores, scheme.granularity);
    const auto refs = block_refs(scores);
    for (const auto& [l, b] : refs) {
        const Matrix& s = scores.layers[l].blocks[b].scores;
        if (s.cols % m != 0) {
            fail(Errc::GroupSizeMismatch, "block '" + block_unit_id(scores.layers[l].name,
                                                                    scores.layers[l].blocks[b].name) +
                                              "' has " + std::to_string(s.cols) +
                                              " columns, not a multiple of " + std::to_string(m));
        }
    }

    MaskSet out = keep_all(scores);
    parallel_for(refs.size(), [&](std::size_t r) {
        const Matrix& s = scores.layers[refs[r].layer].blocks[refs[r].block].scores;
        BlockMask& mask = out.layers[refs[r].layer].blocks[refs[r].block];
        const std::size_t n = n_of.at(ids[unit_of[r]]);
        std::vector<std::size_t> order(m);
        for (std::size_t i = 0; i < s.rows; ++i) {
            for (std::size_t g = 0; g < s.cols; g += m) {
                const float* group = s.values.data() + i * s.cols + g;
                std::iota(order.begin(), order.end(), 0);
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    return group[a] > group[b] || (group[a] == group[b] && a < b);
                });
                for (std::size_t t = n; t < m; ++t) {
                    mask.set(i * s.cols + g + order[t], false);
                }
            }
        }
        mask.recount();
    });
    return out;
}

Model apply_masks(const Model& model, const MaskSet& masks) {
    require_same_layout(model, masks, "masks");
    Model out = model;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        for (std::size_t b = 0; b < out.layers[l].blocks.size(); ++b) {
            Matrix& w = out.layers[l].blocks[b].weights;
            const BlockMask& mask = masks.layers[l].blocks[b];
            if (mask.rows != w.rows || mask.cols != w.cols) {
                fail(Errc::DimMismatch, "mask of '" + block_unit_id(out.layers[l].name, mask.name) +
                                            "' does not match the block's shape");
            }
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (!mask.keep(i)) {
                    w.values[i] = 0.0f;
                }
            }
        }
    }
    return out;
}

Allocation allocation_from_masks(const MaskSet& masks, Granularity granularity, std::string allocator,
                                 double target_sparsity) {
    const auto ids = unit_ids(masks, granularity);
    const auto unit_of = block_units(masks, granularity);
    std::vector<std::size_t> pruned(ids.size(), 0);
    std::vector<std::size_t> total(ids.size(), 0);
    std::size_t r = 0;
    for (const auto& layer : masks.layers) {
        for (const auto& block : layer.blocks) {
            pruned[unit_of[r]] += block.pruned();
            total[unit_of[r]] += block.size();
            ++r;
        }
    }
    Allocation out;
    out.allocator = std::move(allocator);
    out.granularity = granularity;
    out.target_sparsity = target_sparsity;
    for (std::size_t u = 0; u < ids.size(); ++u) {
        const double ratio = total[u] == 0 ? 0.0 : static_cast<double>(pruned[u]) / static_cast<double>(total[u]);
        out.units.push_back({ids[u], ratio, std::nullopt});
    }
    return out;
}

}  // namespace sforge
