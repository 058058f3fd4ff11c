#pragma once

#include <span>
#include <string>
#include <vector>

#include "sforge/artifacts.hpp"
#include "sforge/importance.hpp"
#include "sforge/model.hpp"

namespace sforge {

struct DlpConfig {
    double target_sparsity = 0.7;  // p
    double alpha = 0.15;           // deflation scale
};

/// Intermediate values of one DLP allocation, kept for audits and tests.
struct DlpTrace {
    std::vector<double> d;
    double m = 0.0;
    std::vector<double> raw;     // p + m - d, before clamping
    std::vector<double> ratios;  // raw clamped into [0, 1]
};

/// Scale-shift allocation: d_j = (I_j - I_min) / (I_max - I_min) * 2 alpha,
/// m = mean(d), R_j = clamp(p + m - d_j, 0, 1). When every I_j is equal,
/// d_j = alpha for all j. Throws EmptyInput / InvalidArgument / NonFinite.
DlpTrace dlp_trace(std::span<const double> importance, const DlpConfig& cfg);

Allocation dlp_allocate(const ImportanceVector& importance, const DlpConfig& cfg);

/// Deflation scale tuned per target sparsity (10% ... 80%); other targets use
/// the nearest tabulated level, the lower one on a tie.
double default_alpha(double sparsity);

Allocation uniform_allocate(const Model& model, double sparsity,
                            Granularity granularity = Granularity::PerLayer);

/// Erdos-Renyi scaling: R_l = gamma * (1 - (c_in + c_out) / (c_in * c_out)),
/// gamma solved so the pruned parameter count equals p * total, re-solving
/// after clamping ratios at 1. A multi-block unit uses the numel-weighted
/// mean of its blocks' raw ratios; units with raw <= 0 stay dense. The plus
/// variant keeps the last layer dense. Throws InfeasibleBudget.
Allocation er_allocate(const Model& model, double sparsity, bool plus_variant,
                       Granularity granularity = Granularity::PerLayer);

/// Outlier-driven allocation: the per-unit outlier ratios D serve as the
/// importance signal of the same scale-shift rule as dlp_allocate.
Allocation owl_allocate(const std::vector<std::string>& ids, std::span<const double> lod,
                        Granularity granularity, const DlpConfig& cfg);

/// Mixed N:M: keep_l = 1 - R_l from dlp_allocate, N_l = clamp(round(keep_l M),
/// 1, M), then one-at-a-time repair towards the budget
/// B = round(L M (1 - p)): increment the unit with the largest rounding
/// residual keep_l M - N_l (N_l < M) or decrement the one with the smallest
/// (N_l > 1), ties to the lower index. Throws InfeasibleBudget unless
/// L <= B <= L M, InvalidArgument unless M is 4 or 8.
NMScheme nm_allocate(const ImportanceVector& importance, std::size_t group, const DlpConfig& cfg);

}  // namespace sforge
