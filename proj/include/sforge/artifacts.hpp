#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sforge/model.hpp"

namespace sforge {

// ---------------------------------------------------------------------------
// Calibration statistics

/// Input-activation statistics of one block, gathered from the rows of its
/// input matrix X (one row per calibration token).
struct BlockCalib {
    std::string name;
    std::vector<float> col_norms;  // ||X_j||_2, length C_in
    std::optional<Matrix> gram;    // X^T X, C_in x C_in
    std::uint64_t sample_count = 0;

    bool operator==(const BlockCalib&) const = default;
};

struct LayerCalib {
    std::string name;
    std::vector<BlockCalib> blocks;

    bool operator==(const LayerCalib&) const = default;
};

struct CalibStats {
    std::vector<LayerCalib> layers;
    Attributes attributes;

    /// Throws CalibMismatch (col_norms^2 vs gram diagonal beyond 1e-4
    /// relative, negative/non-finite entries) or AsymmetricGram (beyond 1e-5
    /// absolute).
    void validate() const;

    bool operator==(const CalibStats&) const = default;
};

// ---------------------------------------------------------------------------
// Saliency scores

enum class MetricKind { Magnitude, Wanda, SparseGptDiag };

std::string_view metric_name(MetricKind kind) noexcept;
std::optional<MetricKind> parse_metric(std::string_view name) noexcept;

struct BlockScores {
    std::string name;
    Matrix scores;  // same shape as the block's weights, entries >= 0

    bool operator==(const BlockScores&) const = default;
};

struct LayerScores {
    std::string name;
    std::vector<BlockScores> blocks;

    bool operator==(const LayerScores&) const = default;
};

struct ScoreSet {
    MetricKind metric = MetricKind::Magnitude;
    std::vector<LayerScores> layers;
    Attributes attributes;

    /// Throws NegativeScore / NonFinite on invalid entries.
    void validate() const;

    bool operator==(const ScoreSet&) const = default;
};

// ---------------------------------------------------------------------------
// Masks

/// Keep-mask of one block. Bits are packed row-major, least significant bit
/// first within each byte; 1 = keep. Pad bits of the last byte are zero.
struct BlockMask {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> bits;
    std::size_t kept = 0;

    static BlockMask filled(std::string name, std::size_t rows, std::size_t cols, bool keep);

    std::size_t size() const noexcept { return rows * cols; }
    std::size_t pruned() const noexcept { return size() - kept; }

    bool keep(std::size_t flat) const noexcept { return (bits[flat >> 3] >> (flat & 7)) & 1u; }
    bool keep(std::size_t i, std::size_t j) const noexcept { return keep(i * cols + j); }

    /// Does not touch `kept`; call recount() after a batch of edits.
    void set(std::size_t flat, bool keep_it) noexcept {
        const auto bit = static_cast<std::uint8_t>(1u << (flat & 7));
        if (keep_it) {
            bits[flat >> 3] |= bit;
        } else {
            bits[flat >> 3] &= static_cast<std::uint8_t>(~bit);
        }
    }

    std::size_t popcount() const noexcept;
    void recount() noexcept { kept = popcount(); }

    bool operator==(const BlockMask&) const = default;
};

struct LayerMasks {
    std::string name;
    std::vector<BlockMask> blocks;

    bool operator==(const LayerMasks&) const = default;
};

struct MaskSet {
    std::vector<LayerMasks> layers;
    Attributes attributes;

    /// Throws PopcountMismatch or FormatError (bad sizes, non-zero pad bits).
    void validate() const;

    bool operator==(const MaskSet&) const = default;
};

// ---------------------------------------------------------------------------
// Allocations

/// Per-unit N for N:M sparsity (N weights kept in every group of M
/// consecutive weights along a row).
struct NMScheme {
    std::size_t group = 4;  // M
    Granularity granularity = Granularity::PerLayer;
    std::vector<std::string> units;
    std::vector<std::size_t> kept;  // N per unit, 1 <= N <= M

    bool operator==(const NMScheme&) const = default;
};

struct UnitAllocation {
    std::string id;
    double sparsity = 0.0;
    std::optional<double> importance;

    bool operator==(const UnitAllocation&) const = default;
};

struct Allocation {
    Granularity granularity = Granularity::PerLayer;
    std::vector<UnitAllocation> units;
    double target_sparsity = 0.0;
    std::optional<double> alpha;
    std::string allocator;
    std::string metric;
    std::string aggregator;
    std::optional<NMScheme> nm;
    Attributes attributes;

    /// Throws UnknownUnit, DuplicateName, CoverageGap or InvalidArgument
    /// (ratio outside [0, 1]) unless every unit of `layered` appears exactly
    /// once. Entries may be listed in any order.
    template <class Layered>
    void validate_against(const Layered& layered) const {
        check_units(unit_ids(layered, granularity));
    }

    /// Sparsity per unit of `layered`, in model order (validates first).
    template <class Layered>
    std::vector<double> ratios_for(const Layered& layered) const {
        return ratios_for(unit_ids(layered, granularity));
    }
    std::vector<double> ratios_for(const std::vector<std::string>& ids) const;

    bool operator==(const Allocation&) const = default;

private:
    void check_units(const std::vector<std::string>& expected) const;
};

}  // namespace sforge
