#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "sforge/allocator.hpp"

using namespace sforge;
using fixture::error_of;

namespace {

ImportanceVector imp_of(std::vector<double> values) {
    ImportanceVector v;
    for (std::size_t i = 0; i < values.size(); ++i) {
        v.ids.push_back("l" + std::to_string(i));
    }
    v.values = std::move(values);
    return v;
}

std::vector<double> ratios(const Allocation& a) {
    std::vector<double> out;
    for (const auto& u : a.units) {
        out.push_back(u.sparsity);
    }
    return out;
}

double numel_weighted(const Model& m, const std::vector<double>& r) {
    double pruned = 0.0;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        for (const auto& b : m.layers[l].blocks) {
            pruned += r[l] * static_cast<double>(b.weights.size());
        }
    }
    return pruned;
}

}  // namespace

TEST_CASE("dlp examples") {
    const auto t = dlp_trace(std::vector<double>{5.0 / 6.0, 2.0 / 3.0, 0.5}, {0.7, 0.1});
    CHECK(t.d[0] == doctest::Approx(0.2));
    CHECK(t.d[1] == doctest::Approx(0.1));
    CHECK(t.d[2] == doctest::Approx(0.0));
    CHECK(t.m == doctest::Approx(0.1));
    CHECK(t.ratios[0] == doctest::Approx(0.6));
    CHECK(t.ratios[1] == doctest::Approx(0.7));
    CHECK(t.ratios[2] == doctest::Approx(0.8));

    const auto flat = dlp_trace(std::vector<double>{0.3, 0.3, 0.3}, {0.5, 0.2});
    CHECK(flat.d == std::vector<double>{0.2, 0.2, 0.2});
    CHECK(flat.m == doctest::Approx(0.2));
    for (double r : flat.ratios) {
        CHECK(r == doctest::Approx(0.5));
    }

    const auto clamp = dlp_trace(std::vector<double>{1.0, 0.0}, {0.9, 0.15});
    CHECK(clamp.raw[0] == doctest::Approx(0.75));
    CHECK(clamp.raw[1] == doctest::Approx(1.05));
    CHECK(clamp.ratios[0] == doctest::Approx(0.75));
    CHECK(clamp.ratios[1] == 1.0);

    const Allocation a = dlp_allocate(imp_of({0.9, 0.1, 0.5}), {0.6, 0.0});
    CHECK(ratios(a) == std::vector<double>{0.6, 0.6, 0.6});
    CHECK(a.allocator == "dlp");
    CHECK(a.alpha == 0.0);
    CHECK(a.units[0].importance == 0.9);
}

TEST_CASE("dlp rejects invalid configurations") {
    CHECK(error_of([] { dlp_trace(std::vector<double>{}, {0.5, 0.1}); }) == Errc::EmptyInput);
    CHECK(error_of([] { dlp_trace(std::vector<double>{0.5}, {0.5, -0.1}); }) == Errc::InvalidArgument);
    CHECK(error_of([] { dlp_trace(std::vector<double>{0.5}, {1.5, 0.1}); }) == Errc::InvalidArgument);
    CHECK(error_of([] { dlp_trace(std::vector<double>{std::nan("")}, {0.5, 0.1}); }) == Errc::NonFinite);
}

TEST_CASE("dlp properties on randomized instances") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::size_t n = 2 + seed % 31;
        const auto raw = fixture::uniform_values(seed, n + 2);
        std::vector<double> imp(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(n));
        const double p = raw[n];
        const double alpha = 0.25 * raw[n + 1];
        const auto t = dlp_trace(imp, {p, alpha});

        const double mean_raw = std::accumulate(t.raw.begin(), t.raw.end(), 0.0) / static_cast<double>(n);
        CHECK(std::fabs(mean_raw - p) <= 1e-9);
        for (std::size_t a = 0; a < n; ++a) {
            CHECK(t.raw[a] >= p + t.m - 2 * alpha - 1e-12);
            CHECK(t.raw[a] <= p + t.m + 1e-12);
            CHECK(t.ratios[a] >= 0.0);
            CHECK(t.ratios[a] <= 1.0);
            for (std::size_t b = 0; b < n; ++b) {
                if (imp[a] > imp[b]) {
                    CHECK(t.ratios[a] <= t.ratios[b]);
                    CHECK(t.raw[a] < t.raw[b] + (alpha == 0.0 ? 1e-12 : 0.0));
                }
            }
        }

        // Affine rescaling of I leaves the allocation unchanged.
        const double scale = 0.1 + 10.0 * raw[0];
        const double shift = -3.0 + 6.0 * raw[1];
        std::vector<double> moved = imp;
        for (double& v : moved) {
            v = scale * v + shift;
        }
        const auto u = dlp_trace(moved, {p, alpha});
        CHECK(std::fabs(u.m - t.m) <= 1e-9);
        for (std::size_t a = 0; a < n; ++a) {
            CHECK(std::fabs(u.d[a] - t.d[a]) <= 1e-9);
            CHECK(std::fabs(u.ratios[a] - t.ratios[a]) <= 1e-9);
        }
    }
}

TEST_CASE("zero alpha reduces dlp and owl to uniform") {
    const Model m = fixture::random_model(1, {{4, 4}, {4, 4}, {4, 4}});
    const auto imp = imp_of({0.2, 0.9, 0.4});
    const auto uniform = ratios(uniform_allocate(m, 0.55));
    CHECK(ratios(dlp_allocate(imp, {0.55, 0.0})) == uniform);
    const std::vector<double> lod = {0.01, 0.03, 0.02};
    CHECK(ratios(owl_allocate(imp.ids, lod, Granularity::PerLayer, {0.55, 0.0})) == uniform);
}

TEST_CASE("default alpha table") {
    CHECK(default_alpha(0.7) == 0.15);
    CHECK(default_alpha(0.8) == 0.12);
    CHECK(default_alpha(0.1) == 0.06);
    CHECK(default_alpha(0.5) == 0.04);
    CHECK(default_alpha(0.72) == 0.15);
    CHECK(default_alpha(0.75) == 0.15);  // tie goes to the lower level
    CHECK(default_alpha(0.95) == 0.12);
    CHECK(default_alpha(0.0) == 0.06);
}

TEST_CASE("uniform allocation") {
    const Model m = fixture::random_model(2, {{4, 4}, {2, 8}, {3, 3}});
    CHECK(ratios(uniform_allocate(m, 0.7)) == std::vector<double>{0.7, 0.7, 0.7});
    CHECK(ratios(uniform_allocate(m, 0.0)) == std::vector<double>{0, 0, 0});
    CHECK(ratios(uniform_allocate(m, 1.0)) == std::vector<double>{1, 1, 1});
    const Model blocks = fixture::random_model(2, {{4, 4}, {2, 4}}, 2);
    const Allocation a = uniform_allocate(blocks, 0.3, Granularity::PerBlock);
    CHECK(a.units.size() == 2);
    CHECK(a.units[1].id == "l0/b1");
}

TEST_CASE("er examples") {
    const Model m = fixture::random_model(3, {{4, 4}, {2, 8}});
    const auto er = ratios(er_allocate(m, 0.7, false));
    CHECK(er[0] == doctest::Approx(0.8));
    CHECK(er[1] == doctest::Approx(0.6));

    const Model single = fixture::random_model(3, {{5, 9}});
    CHECK(ratios(er_allocate(single, 0.3, false))[0] == doctest::Approx(0.3));

    const auto plus = ratios(er_allocate(m, 0.4, true));
    CHECK(plus[0] == doctest::Approx(0.8));
    CHECK(plus[1] == 0.0);

    CHECK(error_of([&] { er_allocate(m, 0.6, true); }) == Errc::InfeasibleBudget);
    CHECK(error_of([&] { er_allocate(single, 0.1, true); }) == Errc::InfeasibleBudget);
}

TEST_CASE("er meets the parameter budget after saturation") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto dims = fixture::uniform_values(seed, 8);
        std::vector<std::pair<std::size_t, std::size_t>> shape;
        for (std::size_t l = 0; l < 4; ++l) {
            shape.emplace_back(2 + static_cast<std::size_t>(dims[2 * l] * 30),
                               2 + static_cast<std::size_t>(dims[2 * l + 1] * 30));
        }
        const Model m = fixture::random_model(seed, shape);
        const double total = static_cast<double>(m.weight_count());
        for (double p : {0.1, 0.5, 0.9}) {
            const auto r = ratios(er_allocate(m, p, false));
            CHECK(std::fabs(numel_weighted(m, r) - p * total) <= 1.0);
            for (double v : r) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
}

TEST_CASE("owl gives higher-outlier layers lower sparsity") {
    const std::vector<std::string> ids = {"a", "b"};
    const std::vector<double> lod = {0.02, 0.01};
    const Allocation a = owl_allocate(ids, lod, Granularity::PerLayer, {0.7, 0.1});
    CHECK(a.units[0].sparsity == doctest::Approx(0.6));
    CHECK(a.units[1].sparsity == doctest::Approx(0.8));
    CHECK(a.allocator == "owl");

    const std::vector<double> flat = {0.03, 0.03};
    CHECK(ratios(owl_allocate(ids, flat, Granularity::PerLayer, {0.7, 0.1})) ==
          std::vector<double>{0.7, 0.7});
}

TEST_CASE("nm examples") {
    const NMScheme split = nm_allocate(imp_of({1, 0}), 4, {0.5, 0.25});
    CHECK(split.kept == std::vector<std::size_t>{3, 1});
    CHECK(split.group == 4);
    CHECK(split.units == std::vector<std::string>{"l0", "l1"});

    CHECK(nm_allocate(imp_of({0.5, 0.5, 0.5}), 8, {0.5, 0.1}).kept == std::vector<std::size_t>{4, 4, 4});
    CHECK(nm_allocate(imp_of({0.9, 0.1, 0.3}), 4, {0.0, 0.0}).kept == std::vector<std::size_t>{4, 4, 4});

    CHECK(error_of([] { nm_allocate(imp_of({0.9, 0.1}), 4, {1.0, 0.0}); }) == Errc::InfeasibleBudget);
    CHECK(error_of([] { nm_allocate(imp_of({0.9, 0.1}), 3, {0.5, 0.1}); }) == Errc::InvalidArgument);
}

TEST_CASE("nm budget and range on randomized instances") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const std::size_t n = 1 + seed % 12;
        const auto raw = fixture::uniform_values(seed, n + 2);
        const std::vector<double> imp(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(n));
        const double p = 0.05 + 0.7 * raw[n];
        const double alpha = 0.2 * raw[n + 1];
        for (std::size_t group : {4u, 8u}) {
            const NMScheme s = nm_allocate(imp_of(imp), group, {p, alpha});
            const auto budget = static_cast<std::size_t>(std::floor(static_cast<double>(n * group) * (1.0 - p) + 0.5));
            CHECK(std::accumulate(s.kept.begin(), s.kept.end(), std::size_t{0}) == budget);
            for (std::size_t k : s.kept) {
                CHECK(k >= 1);
                CHECK(k <= group);
            }
            double keep = 0.0;
            for (std::size_t k : s.kept) {
                keep += static_cast<double>(k) / static_cast<double>(group);
            }
            CHECK(std::fabs(keep / static_cast<double>(n) - (1.0 - p)) <= 1.0 / static_cast<double>(n * group) + 1e-12);
        }
    }
}
