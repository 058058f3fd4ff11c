#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sforge/artifacts.hpp"
#include "sforge/model.hpp"

namespace sforge {

// ---------------------------------------------------------------------------
// Synthetic models

/// Generator settings. Layer l (t = l / (L - 1)) is
///
///   W_l = D_out (skip_gain * I + B_l) D_in^-1
///
/// where B_l has entries ~ N(0, sigma_l^2 / cols), sigma_l =
/// base_scale * (1 - redundancy_gradient * t), and each entry is multiplied by
/// outlier_factor with probability q_l. D holds per-channel scales
/// exp(channel_spread * z), z ~ N(0, 1), shared by the two layers meeting at a
/// hidden interface (model input and output are left unscaled), so the scales
/// cancel in the network function but skew the weight magnitudes channel by
/// channel. With redundancy_gradient > 0 later layers have smaller branch
/// weights relative to the skip path, hence lower share of the output and
/// higher relative importance. Setting skip_gain, redundancy_gradient and
/// channel_spread to 0 gives plain Gaussian layers.
struct SynthConfig {
    std::size_t layers = 8;
    std::size_t rows = 64;
    std::size_t cols = 64;
    /// Optional explicit (rows, cols) per layer; overrides layers/rows/cols.
    std::vector<std::pair<std::size_t, std::size_t>> dims;
    double base_scale = 0.5;
    double redundancy_gradient = 0.6;
    /// One rate for every layer, or one per layer.
    std::vector<double> outlier_rates = {0.05};
    double outlier_factor = 10.0;
    double skip_gain = 1.0;
    double channel_spread = 0.5;
    Activation activation = Activation::Identity;
    std::size_t calib_rows = 256;
    std::size_t eval_rows = 256;
    bool with_gram = true;
    std::uint64_t seed = 0;

    /// No weight structure beyond the Gaussian base and planted outliers.
    static SynthConfig plain();

    /// Throws InvalidConfig.
    void validate() const;
    std::vector<std::pair<std::size_t, std::size_t>> layer_dims() const;
    double outlier_rate(std::size_t layer) const;
    Attributes attributes() const;
};

struct SynthBundle {
    Model model;
    CalibStats calib;
    Matrix eval_batch;  // held-out inputs, rows = samples
};

/// Same config and seed give bit-identical output on every platform and
/// thread count.
SynthBundle gen_synthetic(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// Evaluation

struct ForwardResult {
    Matrix outputs;               // rows = samples
    std::vector<Matrix> inputs;   // input of each layer, rows = samples
};

/// x_{l+1} = act(W_l x_l) for every row x of `batch`. Throws
/// UnsupportedTopology (layer without exactly one block) and DimMismatch.
ForwardResult forward(const Model& model, const Matrix& batch);

/// ||W X - W_hat X||_F^2 with X of shape C_in x N (one sample per column),
/// accumulated in double. Throws DimMismatch.
double reconstruction_error(const Matrix& w, const Matrix& w_hat, const Matrix& x);

/// Same error with the samples stored as rows of `x_rows` (N x C_in).
double reconstruction_error_rows(const Matrix& w, const Matrix& w_hat, const Matrix& x_rows);

/// Mean over samples of the squared output difference,
/// (1/N) sum_n ||y_n - y_hat_n||^2. Throws TopologyMismatch.
double divergence(const Model& dense, const Model& pruned, const Matrix& batch);

/// Outlier ratio D = #(A_ij > M mean(A)) / numel, zeros included.
struct LodSummary {
    std::vector<std::string> ids;
    std::vector<double> per_unit;  // D of each unit
    double pooled = 0.0;           // one threshold over all entries of the model
    double mean = 0.0;             // average of per_unit
};

/// Throws InvalidArgument unless M > 0.
LodSummary lod(const ScoreSet& scores, double multiplier, Granularity granularity = Granularity::PerLayer);

/// Outlier ratio of a single score vector.
double lod_ratio(std::span<const float> scores, double multiplier);

struct UnitAudit {
    std::string id;
    double requested = 0.0;
    double achieved = 0.0;
    std::size_t pruned = 0;
    std::size_t total = 0;
    bool flagged = false;  // |achieved - requested| > 1 / cols
};

struct Audit {
    std::vector<UnitAudit> units;
    std::size_t pruned = 0;
    std::size_t total = 0;
    double achieved = 0.0;  // pruned / total
    std::size_t flagged = 0;
};

Audit audit(const MaskSet& masks, const Allocation& alloc);

// ---------------------------------------------------------------------------
// Reports

struct UnitReport {
    std::string id;
    double requested = 0.0;
    double achieved = 0.0;
    std::optional<double> importance;
    double lod = 0.0;  // post-pruning
    std::optional<double> reconstruction_error;
    bool flagged = false;
};

struct Report {
    std::vector<UnitReport> units;
    double target_sparsity = 0.0;
    double achieved_sparsity = 0.0;
    std::optional<double> divergence;
    double lod_pooled = 0.0;
    double lod_mean = 0.0;
    double outlier_multiplier = 7.0;
    std::string allocator;
    std::string metric;
    std::string aggregator;
    std::string granularity;
    std::string seed;
    Attributes config;

    std::string to_json() const;
    /// One row per unit plus a final global row.
    std::string to_csv() const;
};

struct EvalInputs {
    const Model* dense = nullptr;
    const MaskSet* masks = nullptr;
    const Allocation* alloc = nullptr;
    const CalibStats* calib = nullptr;  // needed for wanda / sparsegpt LOD
    const Matrix* batch = nullptr;      // enables divergence and reconstruction error
    MetricKind metric = MetricKind::Magnitude;
    double outlier_multiplier = 7.0;
};

/// Audits the masks, recomputes scores on the masked weights for the
/// post-pruning LOD, and (with a batch) measures divergence and per-unit
/// reconstruction error on the dense per-layer inputs.
Report evaluate(const EvalInputs& in);

}  // namespace sforge
