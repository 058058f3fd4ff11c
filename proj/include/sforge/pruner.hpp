#pragma once

#include <optional>
#include <string_view>

#include "sforge/artifacts.hpp"
#include "sforge/model.hpp"

namespace sforge {

/// Comparison group used when choosing which weights to prune.
enum class SelectionScope { PerOutputRow, WholeMatrix, GlobalAcrossModel };

std::string_view scope_name(SelectionScope s) noexcept;
std::optional<SelectionScope> parse_scope(std::string_view name) noexcept;

/// Number of entries pruned out of `n` at ratio r: floor(r n + 0.5).
std::size_t prune_count(double ratio, std::size_t n) noexcept;

/// Every block inherits the ratio of its allocation unit. WholeMatrix prunes
/// prune_count(R, rows * cols) smallest scores per block; PerOutputRow prunes
/// prune_count(R, cols) per row. Ties prune the lower flat index first.
/// Throws CoverageGap and InvalidArgument (GlobalAcrossModel scope).
MaskSet prune_unstructured(const ScoreSet& scores, const Allocation& alloc, SelectionScope scope);

/// One model-wide threshold: prunes prune_count(p, total) smallest scores of
/// the concatenation of all blocks (block order, then row-major).
MaskSet prune_global(const ScoreSet& scores, double sparsity);

/// Layer-adaptive magnitude pruning: within each unit, weights are sorted by
/// w^2 ascending and scored w^2 / (sum of w^2 from that position on); the
/// prune_count(p, total) smallest scores are pruned model-wide.
MaskSet prune_lamp(const Model& model, double sparsity, Granularity granularity = Granularity::PerLayer);

/// LAMP score of every weight, laid out like the model (exposed for tests).
ScoreSet lamp_scores(const Model& model, Granularity granularity = Granularity::PerLayer);

/// Keeps the N highest scores of every group of M consecutive entries along
/// each row (ties keep the lower index). Throws GroupSizeMismatch when a
/// block's column count is not a multiple of M.
MaskSet prune_nm(const ScoreSet& scores, const NMScheme& scheme);

/// W * mask, with pruned entries written as +0. Throws CoverageGap / DimMismatch.
Model apply_masks(const Model& model, const MaskSet& masks);

/// Allocation describing the per-unit sparsity a mask set actually realizes
/// (used for the global and LAMP baselines, which have no per-unit ratios).
Allocation allocation_from_masks(const MaskSet& masks, Granularity granularity, std::string allocator,
                                 double target_sparsity);

}  // namespace sforge
