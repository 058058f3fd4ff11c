#include "sforge/artifacts.hpp"

#include <bit>
#include <cmath>
#include <set>
#include <unordered_map>

namespace sforge {

void CalibStats::validate() const {
    for (const auto& layer : layers) {
        for (const auto& block : layer.blocks) {
            const std::string where = block_unit_id(layer.name, block.name);
            for (float v : block.col_norms) {
                if (!std::isfinite(v) || v < 0.0f) {
                    fail(Errc::CalibMismatch, where + ": column norms must be finite and >= 0");
                }
            }
            if (!block.gram) {
                continue;
            }
            const Matrix& g = *block.gram;
            const std::size_t n = block.col_norms.size();
            if (g.rows != n || g.cols != n) {
                fail(Errc::CalibMismatch, where + ": gram must be " + std::to_string(n) + "x" +
                                              std::to_string(n));
            }
            for (float v : g.values) {
                if (!std::isfinite(v)) {
                    fail(Errc::CalibMismatch, where + ": gram has a non-finite entry");
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    if (std::fabs(static_cast<double>(g(i, j)) - g(j, i)) > 1e-5) {
                        fail(Errc::AsymmetricGram, where + ": gram[" + std::to_string(i) + "][" +
                                                       std::to_string(j) + "] != gram[" +
                                                       std::to_string(j) + "][" +
                                                       std::to_string(i) + "]");
                    }
                }
                const double diag = g(i, i);
                if (diag < 0.0) {
                    fail(Errc::CalibMismatch, where + ": negative gram diagonal");
                }
                const double norm_sq = static_cast<double>(block.col_norms[i]) * block.col_norms[i];
                const double scale = std::max(diag, norm_sq);
                if (std::fabs(norm_sq - diag) > 1e-4 * scale) {
                    fail(Errc::CalibMismatch, where + ": col_norms[" + std::to_string(i) +
                                                  "]^2 disagrees with the gram diagonal");
                }
            }
        }
    }
}

std::string_view metric_name(MetricKind kind) noexcept {
    switch (kind) {
        case MetricKind::Magnitude: return "magnitude";
        case MetricKind::Wanda: return "wanda";
        case MetricKind::SparseGptDiag: return "sparsegpt";
    }
    return "magnitude";
}

std::optional<MetricKind> parse_metric(std::string_view name) noexcept {
    if (name == "magnitude") return MetricKind::Magnitude;
    if (name == "wanda") return MetricKind::Wanda;
    if (name == "sparsegpt") return MetricKind::SparseGptDiag;
    return std::nullopt;
}

void ScoreSet::validate() const {
    for (const auto& layer : layers) {
        for (const auto& block : layer.blocks) {
            for (float v : block.scores.values) {
                if (!std::isfinite(v)) {
                    fail(Errc::NonFinite, block_unit_id(layer.name, block.name) + ": non-finite score");
                }
                if (v < 0.0f) {
                    fail(Errc::NegativeScore, block_unit_id(layer.name, block.name) + ": negative score");
                }
            }
        }
    }
}

BlockMask BlockMask::filled(std::string name, std::size_t rows, std::size_t cols, bool keep) {
    BlockMask mask;
    mask.name = std::move(name);
    mask.rows = rows;
    mask.cols = cols;
    const std::size_t n = rows * cols;
    mask.bits.assign((n + 7) / 8, keep ? 0xFF : 0x00);
    if (keep && n % 8 != 0) {
        mask.bits.back() = static_cast<std::uint8_t>((1u << (n % 8)) - 1u);
    }
    mask.kept = keep ? n : 0;
    return mask;
}

std::size_t BlockMask::popcount() const noexcept {
    std::size_t total = 0;
    for (std::uint8_t byte : bits) {
        total += static_cast<std::size_t>(std::popcount(byte));
    }
    return total;
}

void MaskSet::validate() const {
    for (const auto& layer : layers) {
        for (const auto& block : layer.blocks) {
            const std::string where = block_unit_id(layer.name, block.name);
            const std::size_t n = block.size();
            if (block.bits.size() != (n + 7) / 8) {
                fail(Errc::FormatError, where + ": mask byte count does not match its dimensions");
            }
            if (n % 8 != 0 && (block.bits.back() >> (n % 8)) != 0) {
                fail(Errc::FormatError, where + ": mask pad bits must be zero");
            }
            if (block.popcount() != block.kept) {
                fail(Errc::PopcountMismatch, where + ": declared kept count " +
                                                 std::to_string(block.kept) + " but " +
                                                 std::to_string(block.popcount()) + " bits are set");
            }
        }
    }
}

void Allocation::check_units(const std::vector<std::string>& expected) const {
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        position.emplace(expected[i], i);
    }
    std::set<std::string> seen;
    for (const auto& unit : units) {
        if (!position.contains(unit.id)) {
            fail(Errc::UnknownUnit, "allocation references unknown unit '" + unit.id + "'");
        }
        if (!seen.insert(unit.id).second) {
            fail(Errc::DuplicateName, "allocation lists unit '" + unit.id + "' twice");
        }
        if (!(unit.sparsity >= 0.0 && unit.sparsity <= 1.0)) {
            fail(Errc::InvalidArgument, "sparsity of unit '" + unit.id + "' is outside [0, 1]");
        }
    }
    for (const auto& id : expected) {
        if (!seen.contains(id)) {
            fail(Errc::CoverageGap, "allocation has no entry for unit '" + id + "'");
        }
    }
}

std::vector<double> Allocation::ratios_for(const std::vector<std::string>& ids) const {
    check_units(ids);
    std::unordered_map<std::string_view, double> by_id;
    for (const auto& unit : units) {
        by_id.emplace(unit.id, unit.sparsity);
    }
    std::vector<double> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        out.push_back(by_id.at(id));
    }
    return out;
}

}  // namespace sforge
