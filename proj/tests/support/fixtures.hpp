#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sforge/artifacts.hpp"
#include "sforge/error.hpp"
#include "sforge/model.hpp"
#include "sforge/rng.hpp"

namespace fixture {

inline std::vector<float> uniform_values(std::uint64_t seed, std::size_t n, double lo = 0.0, double hi = 1.0) {
    sforge::Rng rng(seed, 7);
    std::vector<float> v(n);
    for (float& x : v) {
        x = static_cast<float>(lo + (hi - lo) * rng.uniform());
    }
    return v;
}

inline sforge::Matrix random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols) {
    sforge::Rng rng(seed, 11);
    sforge::Matrix m(rows, cols);
    for (float& x : m.values) {
        x = static_cast<float>(rng.normal());
    }
    return m;
}

/// Model with one block per entry of `dims` grouped by `blocks_per_layer`.
inline sforge::Model random_model(std::uint64_t seed, const std::vector<std::pair<std::size_t, std::size_t>>& dims,
                                  std::size_t blocks_per_layer = 1) {
    sforge::Model m;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i % blocks_per_layer == 0) {
            m.layers.push_back({"l" + std::to_string(i / blocks_per_layer), sforge::Activation::Identity, {}});
        }
        m.layers.back().blocks.push_back(
            {"b" + std::to_string(i % blocks_per_layer), random_matrix(seed * 131 + i, dims[i].first, dims[i].second)});
    }
    return m;
}

inline sforge::ScoreSet abs_scores(const sforge::Model& m) {
    sforge::ScoreSet s;
    for (const auto& layer : m.layers) {
        sforge::LayerScores ls{layer.name, {}};
        for (const auto& block : layer.blocks) {
            sforge::Matrix a = block.weights;
            for (float& v : a.values) {
                v = v < 0 ? -v : v;
            }
            ls.blocks.push_back({block.name, a});
        }
        s.layers.push_back(ls);
    }
    return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("sforge-test-" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}


/// Error code thrown by `f`, or nullopt if it returns normally.
template <class F>
std::optional<sforge::Errc> error_of(F&& f) {
    try {
        f();
    } catch (const sforge::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

}  // namespace fixture
