#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sforge/error.hpp"

namespace sforge {

/// Free-form string metadata carried by every artifact (resolved run config,
/// generator seed, ...). Serialized as a JSON object of strings.
using Attributes = std::map<std::string, std::string>;

/// Dense row-major f32 matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, float fill = 0.0f)
        : rows(r), cols(c), values(r * c, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<float>> rows);

    std::size_t size() const noexcept { return values.size(); }

    float& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    float operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    std::span<float> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

/// Byte-level equality (distinguishes -0 from +0, unlike operator==).
bool bit_identical(const Matrix& a, const Matrix& b) noexcept;

enum class Activation { Identity, ReLU };

std::string_view activation_name(Activation act) noexcept;
std::optional<Activation> parse_activation(std::string_view name) noexcept;

struct Block {
    std::string name;
    Matrix weights;  // rows = C_out, cols = C_in

    bool operator==(const Block&) const = default;
};

struct Layer {
    std::string name;
    Activation activation = Activation::Identity;
    std::vector<Block> blocks;

    bool operator==(const Layer&) const = default;
};

struct Model {
    std::vector<Layer> layers;
    Attributes attributes;

    /// Throws DuplicateName, InvalidName, NonFiniteWeight or DimMismatch.
    void validate() const;
    std::size_t weight_count() const noexcept;
    std::size_t block_count() const noexcept;

    bool operator==(const Model&) const = default;
};

/// Allocation unit: a whole layer (all of its blocks share one ratio) or a
/// single block.
enum class Granularity { PerLayer, PerBlock };

std::string_view granularity_name(Granularity g) noexcept;
std::optional<Granularity> parse_granularity(std::string_view name) noexcept;

/// Unit id of a block at PerBlock granularity: "<layer>/<block>".
std::string block_unit_id(std::string_view layer, std::string_view block);

/// Throws InvalidName for empty names and names containing '/'.
void require_valid_name(std::string_view name, std::string_view what);

// The helpers below accept any artifact that mirrors the model layout
// (Model, CalibStats, ScoreSet, MaskSet): `.layers[i].name` and
// `.layers[i].blocks[j].name`.

template <class Layered>
std::vector<std::string> unit_ids(const Layered& layered, Granularity g) {
    std::vector<std::string> ids;
    for (const auto& layer : layered.layers) {
        if (g == Granularity::PerLayer) {
            ids.push_back(layer.name);
            continue;
        }
        for (const auto& block : layer.blocks) {
            ids.push_back(block_unit_id(layer.name, block.name));
        }
    }
    return ids;
}

/// Unit index of every block, in flattened (layer, block) order.
template <class Layered>
std::vector<std::size_t> block_units(const Layered& layered, Granularity g) {
    std::vector<std::size_t> out;
    std::size_t block_index = 0;
    for (std::size_t l = 0; l < layered.layers.size(); ++l) {
        for (std::size_t b = 0; b < layered.layers[l].blocks.size(); ++b, ++block_index) {
            out.push_back(g == Granularity::PerLayer ? l : block_index);
        }
    }
    return out;
}

/// Throws CoverageGap unless `other` has exactly the layers and blocks of
/// `reference`, with the same names in the same order.
template <class Reference, class Other>
void require_same_layout(const Reference& reference, const Other& other, std::string_view what) {
    auto gap = [&](const std::string& detail) {
        fail(Errc::CoverageGap, std::string(what) + ": " + detail);
    };
    if (reference.layers.size() != other.layers.size()) {
        gap("expected " + std::to_string(reference.layers.size()) + " layers, got " +
            std::to_string(other.layers.size()));
    }
    for (std::size_t l = 0; l < reference.layers.size(); ++l) {
        const auto& ref = reference.layers[l];
        const auto& got = other.layers[l];
        if (ref.name != got.name) {
            gap("layer " + std::to_string(l) + " is '" + got.name + "', expected '" + ref.name + "'");
        }
        if (ref.blocks.size() != got.blocks.size()) {
            gap("layer '" + ref.name + "' has " + std::to_string(got.blocks.size()) +
                " blocks, expected " + std::to_string(ref.blocks.size()));
        }
        for (std::size_t b = 0; b < ref.blocks.size(); ++b) {
            if (ref.blocks[b].name != got.blocks[b].name) {
                gap("block '" + block_unit_id(ref.name, ref.blocks[b].name) + "' missing (found '" +
                    got.blocks[b].name + "')");
            }
        }
    }
}

}  // namespace sforge
