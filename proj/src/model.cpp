#include "sforge/model.hpp"

#include <cmath>
#include <cstring>
#include <set>

namespace sforge {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
    Matrix m;
    m.rows = rows.size();
    m.cols = rows.size() == 0 ? 0 : rows.begin()->size();
    for (const auto& row : rows) {
        if (row.size() != m.cols) {
            fail(Errc::DimMismatch, "ragged matrix literal");
        }
        m.values.insert(m.values.end(), row.begin(), row.end());
    }
    return m;
}

bool bit_identical(const Matrix& a, const Matrix& b) noexcept {
    return a.rows == b.rows && a.cols == b.cols && a.values.size() == b.values.size() &&
           (a.values.empty() ||
            std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0);
}

std::string_view activation_name(Activation act) noexcept {
    return act == Activation::ReLU ? "relu" : "identity";
}

std::optional<Activation> parse_activation(std::string_view name) noexcept {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::ReLU;
    return std::nullopt;
}

std::string_view granularity_name(Granularity g) noexcept {
    return g == Granularity::PerBlock ? "per-block" : "per-layer";
}

std::optional<Granularity> parse_granularity(std::string_view name) noexcept {
    if (name == "per-layer") return Granularity::PerLayer;
    if (name == "per-block") return Granularity::PerBlock;
    return std::nullopt;
}

std::string block_unit_id(std::string_view layer, std::string_view block) {
    std::string id(layer);
    id += '/';
    id += block;
    return id;
}

void require_valid_name(std::string_view name, std::string_view what) {
    if (name.empty() || name.find('/') != std::string_view::npos) {
        fail(Errc::InvalidName, std::string(what) + " name '" + std::string(name) +
                                    "' must be non-empty and must not contain '/'");
    }
}

void Model::validate() const {
    std::set<std::string> layer_names;
    for (const auto& layer : layers) {
        require_valid_name(layer.name, "layer");
        if (!layer_names.insert(layer.name).second) {
            fail(Errc::DuplicateName, "duplicate layer name '" + layer.name + "'");
        }
        std::set<std::string> block_names;
        for (const auto& block : layer.blocks) {
            require_valid_name(block.name, "block");
            if (!block_names.insert(block.name).second) {
                fail(Errc::DuplicateName,
                     "duplicate block name '" + block.name + "' in layer '" + layer.name + "'");
            }
            const Matrix& w = block.weights;
            if (w.rows == 0 || w.cols == 0 || w.values.size() != w.rows * w.cols) {
                fail(Errc::DimMismatch, "block '" + block_unit_id(layer.name, block.name) +
                                            "' has inconsistent dimensions");
            }
            for (float v : w.values) {
                if (!std::isfinite(v)) {
                    fail(Errc::NonFiniteWeight,
                         "block '" + block_unit_id(layer.name, block.name) + "' has a non-finite weight");
                }
            }
        }
    }
}

std::size_t Model::weight_count() const noexcept {
    std::size_t total = 0;
    for (const auto& layer : layers) {
        for (const auto& block : layer.blocks) {
            total += block.weights.size();
        }
    }
    return total;
}

std::size_t Model::block_count() const noexcept {
    std::size_t total = 0;
    for (const auto& layer : layers) {
        total += layer.blocks.size();
    }
    return total;
}

}  // namespace sforge
