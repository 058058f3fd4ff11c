#include "sforge/allocator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace sforge {

namespace {

void require_sparsity(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        fail(Errc::InvalidArgument, "sparsity must lie in [0, 1], got " + std::to_string(p));
    }
}

void require_config(const DlpConfig& cfg) {
    require_sparsity(cfg.target_sparsity);
    if (!(cfg.alpha >= 0.0) || !std::isfinite(cfg.alpha)) {
        fail(Errc::InvalidArgument, "alpha must be finite and >= 0");
    }
}

Allocation make_allocation(std::string allocator, Granularity g, const std::vector<std::string>& ids,
                           std::span<const double> ratios, std::span<const double> importance,
                           double p) {
    Allocation out;
    out.allocator = std::move(allocator);
    out.granularity = g;
    out.target_sparsity = p;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        UnitAllocation unit{ids[i], ratios[i], std::nullopt};
        if (!importance.empty()) {
            unit.importance = importance[i];
        }
        out.units.push_back(std::move(unit));
    }
    return out;
}

double round_half_up(double x) { return std::floor(x + 0.5); }

}  // namespace

DlpTrace dlp_trace(std::span<const double> importance, const DlpConfig& cfg) {
    require_config(cfg);
    if (importance.empty()) {
        fail(Errc::EmptyInput, "no units to allocate");
    }
    for (double v : importance) {
        if (!std::isfinite(v)) {
            fail(Errc::NonFinite, "importance must be finite");
        }
    }
    const auto [lo, hi] = std::minmax_element(importance.begin(), importance.end());
    const double i_min = *lo;
    const double range = *hi - *lo;
    const std::size_t n = importance.size();

    DlpTrace t;
    t.d.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        t.d[j] = range > 0.0 ? (importance[j] - i_min) / range * 2.0 * cfg.alpha : cfg.alpha;
    }
    double sum = 0.0;
    for (double v : t.d) {
        sum += v;
    }
    t.m = sum / static_cast<double>(n);
    t.raw.resize(n);
    t.ratios.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        t.raw[j] = cfg.target_sparsity + t.m - t.d[j];
        t.ratios[j] = std::clamp(t.raw[j], 0.0, 1.0);
    }
    return t;
}

Allocation dlp_allocate(const ImportanceVector& importance, const DlpConfig& cfg) {
    const DlpTrace t = dlp_trace(importance.values, cfg);
    Allocation out = make_allocation("dlp", importance.granularity, importance.ids, t.ratios,
                                     importance.values, cfg.target_sparsity);
    out.alpha = cfg.alpha;
    return out;
}

double default_alpha(double sparsity) {
    static constexpr std::array<std::pair<double, double>, 8> kTable = {{
        {0.1, 0.06}, {0.2, 0.02}, {0.3, 0.04}, {0.4, 0.02},
        {0.5, 0.04}, {0.6, 0.10}, {0.7, 0.15}, {0.8, 0.12},
    }};
    double best = kTable[0].second;
    double best_gap = std::fabs(sparsity - kTable[0].first);
    for (const auto& [level, alpha] : kTable) {
        const double gap = std::fabs(sparsity - level);
        if (gap < best_gap - 1e-12) {
            best = alpha;
            best_gap = gap;
        }
    }
    return best;
}

Allocation uniform_allocate(const Model& model, double sparsity, Granularity granularity) {
    require_sparsity(sparsity);
    const auto ids = unit_ids(model, granularity);
    const std::vector<double> ratios(ids.size(), sparsity);
    return make_allocation("uniform", granularity, ids, ratios, {}, sparsity);
}

Allocation er_allocate(const Model& model, double sparsity, bool plus_variant, Granularity granularity) {
    require_sparsity(sparsity);
    const auto ids = unit_ids(model, granularity);
    const auto unit_of = block_units(model, granularity);
    const std::size_t n = ids.size();
    if (n == 0) {
        fail(Errc::EmptyInput, "model has no units");
    }

    std::vector<double> numel(n, 0.0);
    std::vector<double> weighted_raw(n, 0.0);
    std::vector<bool> forced_dense(n, false);
    std::size_t flat = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (const auto& block : model.layers[l].blocks) {
            const std::size_t u = unit_of[flat++];
            const double rows = static_cast<double>(block.weights.rows);
            const double cols = static_cast<double>(block.weights.cols);
            numel[u] += rows * cols;
            weighted_raw[u] += (1.0 - (rows + cols) / (rows * cols)) * rows * cols;
            if (plus_variant && l + 1 == model.layers.size()) {
                forced_dense[u] = true;
            }
        }
    }
    std::vector<double> raw(n, 0.0);
    bool any_positive = false;
    for (std::size_t u = 0; u < n; ++u) {
        if (forced_dense[u]) {
            continue;
        }
        raw[u] = numel[u] > 0.0 ? weighted_raw[u] / numel[u] : 0.0;
        any_positive = any_positive || raw[u] > 0.0;
    }
    // Degenerate shapes (every eligible unit 1 x c or smaller) leave nothing
    // to scale; fall back to a flat profile over the eligible units.
    if (!any_positive) {
        for (std::size_t u = 0; u < n; ++u) {
            raw[u] = forced_dense[u] ? 0.0 : 1.0;
        }
    }

    double total = 0.0;
    for (double v : numel) {
        total += v;
    }
    const double budget = sparsity * total;
    std::vector<double> ratios(n, 0.0);
    std::vector<bool> saturated(n, false);
    for (;;) {
        double remaining = budget;
        double denom = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
            if (saturated[u]) {
                remaining -= numel[u];
            } else if (raw[u] > 0.0) {
                denom += raw[u] * numel[u];
            }
        }
        if (remaining <= 0.0) {
            remaining = 0.0;
        }
        if (denom == 0.0) {
            if (remaining > 0.5) {
                fail(Errc::InfeasibleBudget, "cannot prune " + std::to_string(budget) +
                                                 " weights with the eligible layers saturated");
            }
            break;
        }
        const double gamma = remaining / denom;
        bool clamped = false;
        for (std::size_t u = 0; u < n; ++u) {
            if (saturated[u]) {
                ratios[u] = 1.0;
            } else if (raw[u] > 0.0) {
                ratios[u] = gamma * raw[u];
                if (ratios[u] > 1.0) {
                    saturated[u] = true;
                    clamped = true;
                }
            } else {
                ratios[u] = 0.0;
            }
        }
        if (!clamped) {
            break;
        }
    }
    for (double& r : ratios) {
        r = std::clamp(r, 0.0, 1.0);
    }
    return make_allocation(plus_variant ? "er-plus" : "er", granularity, ids, ratios, {}, sparsity);
}

Allocation owl_allocate(const std::vector<std::string>& ids, std::span<const double> lod,
                        Granularity granularity, const DlpConfig& cfg) {
    if (ids.size() != lod.size()) {
        fail(Errc::DimMismatch, "outlier ratios do not match the unit list");
    }
    for (double v : lod) {
        if (!(v >= 0.0 && v <= 1.0)) {
            fail(Errc::InvalidArgument, "outlier ratios must lie in [0, 1]");
        }
    }
    const DlpTrace t = dlp_trace(lod, cfg);
    Allocation out = make_allocation("owl", granularity, ids, t.ratios, lod, cfg.target_sparsity);
    out.alpha = cfg.alpha;
    return out;
}

NMScheme nm_allocate(const ImportanceVector& importance, std::size_t group, const DlpConfig& cfg) {
    if (group != 4 && group != 8) {
        fail(Errc::InvalidArgument, "N:M group size must be 4 or 8, got " + std::to_string(group));
    }
    const DlpTrace t = dlp_trace(importance.values, cfg);
    const std::size_t units = t.ratios.size();
    const double m = static_cast<double>(group);
    const double budget_real = round_half_up(static_cast<double>(units) * m * (1.0 - cfg.target_sparsity));
    const auto budget = static_cast<std::size_t>(budget_real);
    if (budget < units || budget > units * group) {
        fail(Errc::InfeasibleBudget, "keep budget " + std::to_string(budget) + " is outside [" +
                                         std::to_string(units) + ", " + std::to_string(units * group) +
                                         "]");
    }

    std::vector<double> target(units);
    std::vector<std::size_t> kept(units);
    std::size_t total = 0;
    for (std::size_t u = 0; u < units; ++u) {
        target[u] = (1.0 - t.ratios[u]) * m;
        kept[u] = static_cast<std::size_t>(std::clamp(round_half_up(target[u]), 1.0, m));
        total += kept[u];
    }
    while (total != budget) {
        const bool grow = total < budget;
        std::size_t pick = units;
        double best = 0.0;
        for (std::size_t u = 0; u < units; ++u) {
            if (grow ? kept[u] >= group : kept[u] <= 1) {
                continue;
            }
            const double residual = target[u] - static_cast<double>(kept[u]);
            if (pick == units || (grow ? residual > best : residual < best)) {
                pick = u;
                best = residual;
            }
        }
        kept[pick] = grow ? kept[pick] + 1 : kept[pick] - 1;
        total = grow ? total + 1 : total - 1;
    }

    NMScheme scheme;
    scheme.group = group;
    scheme.granularity = importance.granularity;
    scheme.units = importance.ids;
    scheme.kept = std::move(kept);
    return scheme;
}

}  // namespace sforge
