#include "sforge/evalbench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "sforge/metrics.hpp"
#include "sforge/parallel.hpp"
#include "sforge/pruner.hpp"
#include "sforge/rng.hpp"
#include "sforge/stats.hpp"

namespace sforge {

namespace {

// Stream ids; each (seed, stream) pair is an independent sequence.
constexpr std::uint64_t kWeightStream = 0x100;
constexpr std::uint64_t kOutlierStream = 0x10000;
constexpr std::uint64_t kChannelStream = 0x20000;
constexpr std::uint64_t kCalibStream = 0x30000;
constexpr std::uint64_t kEvalStream = 0x30001;

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string layer_name(std::size_t index, std::size_t count) {
    const std::size_t width = std::max<std::size_t>(2, std::to_string(count - 1).size());
    std::string digits = std::to_string(index);
    return "layer" + std::string(width - digits.size(), '0') + digits;
}

Matrix normal_matrix(std::uint64_t seed, std::uint64_t stream, std::size_t rows, std::size_t cols) {
    Rng rng(seed, stream);
    Matrix out(rows, cols);
    for (float& v : out.values) {
        v = static_cast<float>(rng.normal());
    }
    return out;
}

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n") == std::string::npos) {
        return text;
    }
    std::string out = "\"";
    for (char c : text) {
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    }
    return out + "\"";
}

void invalid(const std::string& detail) { fail(Errc::InvalidConfig, detail); }

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic models

SynthConfig SynthConfig::plain() {
    SynthConfig cfg;
    cfg.redundancy_gradient = 0.0;
    cfg.skip_gain = 0.0;
    cfg.channel_spread = 0.0;
    cfg.base_scale = 1.0;
    return cfg;
}

std::vector<std::pair<std::size_t, std::size_t>> SynthConfig::layer_dims() const {
    if (!dims.empty()) {
        return dims;
    }
    return std::vector<std::pair<std::size_t, std::size_t>>(layers, {rows, cols});
}

double SynthConfig::outlier_rate(std::size_t layer) const {
    return outlier_rates.size() == 1 ? outlier_rates[0] : outlier_rates.at(layer);
}

void SynthConfig::validate() const {
    const auto d = layer_dims();
    if (d.empty()) {
        invalid("at least one layer is required");
    }
    for (std::size_t l = 0; l < d.size(); ++l) {
        if (d[l].first == 0 || d[l].second == 0) {
            invalid("layer " + std::to_string(l) + " has a zero dimension");
        }
        if (l > 0 && d[l].second != d[l - 1].first) {
            invalid("layer " + std::to_string(l) + " takes " + std::to_string(d[l].second) +
                    " inputs but layer " + std::to_string(l - 1) + " produces " +
                    std::to_string(d[l - 1].first));
        }
    }
    if (outlier_rates.size() != 1 && outlier_rates.size() != d.size()) {
        invalid("outlier rates must list one value or one per layer");
    }
    for (double q : outlier_rates) {
        if (!(q >= 0.0 && q <= 1.0)) {
            invalid("outlier rate must lie in [0, 1]");
        }
    }
    if (!(outlier_factor > 1.0) || !std::isfinite(outlier_factor)) {
        invalid("outlier factor must be finite and > 1");
    }
    if (!(base_scale > 0.0) || !std::isfinite(base_scale)) {
        invalid("base scale must be finite and > 0");
    }
    if (!(redundancy_gradient < 1.0) || !std::isfinite(redundancy_gradient)) {
        invalid("redundancy gradient must be finite and < 1");
    }
    if (!(channel_spread >= 0.0 && channel_spread <= 4.0)) {
        invalid("channel spread must lie in [0, 4]");
    }
    if (!std::isfinite(skip_gain)) {
        invalid("skip gain must be finite");
    }
    if (calib_rows == 0 || eval_rows == 0) {
        invalid("calibration and evaluation batches need at least one row");
    }
}

Attributes SynthConfig::attributes() const {
    Attributes a;
    std::string dim_text;
    for (const auto& [r, c] : layer_dims()) {
        dim_text += (dim_text.empty() ? "" : ",") + std::to_string(r) + "x" + std::to_string(c);
    }
    std::string rates;
    for (double q : outlier_rates) {
        rates += (rates.empty() ? "" : ",") + format_double(q);
    }
    a["gen.dims"] = dim_text;
    a["gen.base_scale"] = format_double(base_scale);
    a["gen.redundancy_gradient"] = format_double(redundancy_gradient);
    a["gen.outlier_rates"] = rates;
    a["gen.outlier_factor"] = format_double(outlier_factor);
    a["gen.skip_gain"] = format_double(skip_gain);
    a["gen.channel_spread"] = format_double(channel_spread);
    a["gen.activation"] = std::string(activation_name(activation));
    a["gen.calib_rows"] = std::to_string(calib_rows);
    a["gen.eval_rows"] = std::to_string(eval_rows);
    a["gen.seed"] = std::to_string(seed);
    a["gen.prng"] = "splitmix64-polar";
    return a;
}

SynthBundle gen_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const auto dims = cfg.layer_dims();
    const std::size_t count = dims.size();

    // Channel scales of every hidden interface (output of layer l feeding l + 1).
    std::vector<std::vector<double>> scales(count);
    for (std::size_t l = 0; l + 1 < count; ++l) {
        Rng rng(cfg.seed, kChannelStream + l);
        scales[l].resize(dims[l].first);
        for (double& s : scales[l]) {
            s = portable_exp(cfg.channel_spread * rng.normal());
        }
    }

    SynthBundle out;
    out.model.layers.resize(count);
    parallel_for(count, [&](std::size_t l) {
        const auto [rows, cols] = dims[l];
        const double t = count > 1 ? static_cast<double>(l) / static_cast<double>(count - 1) : 0.0;
        const double sigma = cfg.base_scale * (1.0 - cfg.redundancy_gradient * t) /
                             std::sqrt(static_cast<double>(cols));
        const double q = cfg.outlier_rate(l);
        Rng base(cfg.seed, kWeightStream + l);
        Rng outlier(cfg.seed, kOutlierStream + l);

        Matrix w(rows, cols);
        for (std::size_t i = 0; i < rows; ++i) {
            const double row_scale = l + 1 < count ? scales[l][i] : 1.0;
            for (std::size_t j = 0; j < cols; ++j) {
                double v = base.normal() * sigma;
                if (outlier.uniform() < q) {
                    v *= cfg.outlier_factor;
                }
                if (i == j) {
                    v += cfg.skip_gain;
                }
                const double col_scale = l > 0 ? scales[l - 1][j] : 1.0;
                w(i, j) = static_cast<float>(v * row_scale / col_scale);
            }
        }
        Layer& layer = out.model.layers[l];
        layer.name = layer_name(l, count);
        layer.activation = cfg.activation;
        layer.blocks.push_back({"w", std::move(w)});
    });
    out.model.attributes = cfg.attributes();

    const Matrix calib_batch = normal_matrix(cfg.seed, kCalibStream, cfg.calib_rows, dims[0].second);
    const ForwardResult dense = forward(out.model, calib_batch);
    out.calib = build_calib_stats(out.model, dense.inputs, cfg.with_gram);
    out.calib.attributes = out.model.attributes;
    out.eval_batch = normal_matrix(cfg.seed, kEvalStream, cfg.eval_rows, dims[0].second);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

ForwardResult forward(const Model& model, const Matrix& batch) {
    for (const auto& layer : model.layers) {
        if (layer.blocks.size() != 1) {
            fail(Errc::UnsupportedTopology, "layer '" + layer.name + "' has " +
                                                std::to_string(layer.blocks.size()) +
                                                " blocks; forward needs exactly one");
        }
    }
    ForwardResult out;
    Matrix x = batch;
    for (const auto& layer : model.layers) {
        const Matrix& w = layer.blocks[0].weights;
        if (x.cols != w.cols) {
            fail(Errc::DimMismatch, "layer '" + layer.name + "' expects " + std::to_string(w.cols) +
                                        " inputs, got " + std::to_string(x.cols));
        }
        Matrix y(x.rows, w.rows);
        parallel_for(x.rows, [&](std::size_t n) {
            const auto in = x.row(n);
            for (std::size_t i = 0; i < w.rows; ++i) {
                const auto wr = w.row(i);
                double acc = 0.0;
                for (std::size_t j = 0; j < w.cols; ++j) {
                    acc += static_cast<double>(wr[j]) * in[j];
                }
                float v = static_cast<float>(acc);
                if (layer.activation == Activation::ReLU && !(v > 0.0f)) {
                    v = 0.0f;
                }
                y(n, i) = v;
            }
        });
        out.inputs.push_back(std::move(x));
        x = std::move(y);
    }
    out.outputs = std::move(x);
    return out;
}

namespace {

/// sum over samples of ||(W - W_hat) x||^2; sample n, feature j read via at(n, j).
template <class At>
double diff_energy(const Matrix& w, const Matrix& w_hat, std::size_t samples, At&& at) {
    if (w.rows != w_hat.rows || w.cols != w_hat.cols) {
        fail(Errc::DimMismatch, "pruned weights differ in shape from the dense weights");
    }
    std::vector<double> delta(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        delta[i] = static_cast<double>(w.values[i]) - static_cast<double>(w_hat.values[i]);
    }
    std::vector<double> per_sample(samples, 0.0);
    parallel_for(samples, [&](std::size_t n) {
        double total = 0.0;
        for (std::size_t i = 0; i < w.rows; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < w.cols; ++j) {
                acc += delta[i * w.cols + j] * at(n, j);
            }
            total += acc * acc;
        }
        per_sample[n] = total;
    });
    double sum = 0.0;
    for (double v : per_sample) {
        sum += v;
    }
    return sum;
}

}  // namespace

double reconstruction_error(const Matrix& w, const Matrix& w_hat, const Matrix& x) {
    if (x.rows != w.cols) {
        fail(Errc::DimMismatch, "X has " + std::to_string(x.rows) + " rows, weights have " +
                                    std::to_string(w.cols) + " columns");
    }
    return diff_energy(w, w_hat, x.cols, [&](std::size_t n, std::size_t j) {
        return static_cast<double>(x(j, n));
    });
}

double reconstruction_error_rows(const Matrix& w, const Matrix& w_hat, const Matrix& x_rows) {
    if (x_rows.cols != w.cols) {
        fail(Errc::DimMismatch, "inputs have " + std::to_string(x_rows.cols) + " features, weights have " +
                                    std::to_string(w.cols) + " columns");
    }
    return diff_energy(w, w_hat, x_rows.rows, [&](std::size_t n, std::size_t j) {
        return static_cast<double>(x_rows(n, j));
    });
}

double divergence(const Model& dense, const Model& pruned, const Matrix& batch) {
    if (dense.layers.size() != pruned.layers.size()) {
        fail(Errc::TopologyMismatch, "models have different layer counts");
    }
    for (std::size_t l = 0; l < dense.layers.size(); ++l) {
        const auto& a = dense.layers[l];
        const auto& b = pruned.layers[l];
        bool same = a.blocks.size() == b.blocks.size() && a.activation == b.activation;
        for (std::size_t k = 0; same && k < a.blocks.size(); ++k) {
            same = a.blocks[k].weights.rows == b.blocks[k].weights.rows &&
                   a.blocks[k].weights.cols == b.blocks[k].weights.cols;
        }
        if (!same) {
            fail(Errc::TopologyMismatch, "layer " + std::to_string(l) + " differs between the models");
        }
    }
    if (batch.rows == 0) {
        fail(Errc::EmptyInput, "empty evaluation batch");
    }
    const Matrix y = forward(dense, batch).outputs;
    const Matrix y_hat = forward(pruned, batch).outputs;
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = static_cast<double>(y.values[i]) - y_hat.values[i];
        total += d * d;
    }
    return total / static_cast<double>(batch.rows);
}

double lod_ratio(std::span<const float> scores, double multiplier) {
    if (!(multiplier > 0.0)) {
        fail(Errc::InvalidArgument, "outlier multiplier must be > 0");
    }
    if (scores.empty()) {
        return 0.0;
    }
    const double threshold = multiplier * ordered_sum(scores) / static_cast<double>(scores.size());
    std::size_t hits = 0;
    for (float v : scores) {
        hits += static_cast<double>(v) > threshold ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(scores.size());
}

LodSummary lod(const ScoreSet& scores, double multiplier, Granularity granularity) {
    if (!(multiplier > 0.0)) {
        fail(Errc::InvalidArgument, "outlier multiplier must be > 0");
    }
    LodSummary out;
    out.ids = unit_ids(scores, granularity);
    const auto unit_of = block_units(scores, granularity);

    // Per-unit sums and counts, then a second pass against each threshold.
    std::vector<double> unit_sum(out.ids.size(), 0.0);
    std::vector<std::size_t> unit_n(out.ids.size(), 0);
    std::vector<const Matrix*> blocks;
    for (const auto& layer : scores.layers) {
        for (const auto& block : layer.blocks) {
            blocks.push_back(&block.scores);
        }
    }
    double total_sum = 0.0;
    std::size_t total_n = 0;
    for (std::size_t r = 0; r < blocks.size(); ++r) {
        const double s = ordered_sum(blocks[r]->values);
        unit_sum[unit_of[r]] += s;
        unit_n[unit_of[r]] += blocks[r]->size();
        total_sum += s;
        total_n += blocks[r]->size();
    }
    std::vector<std::size_t> unit_hits(out.ids.size(), 0);
    std::size_t pooled_hits = 0;
    const double pooled_threshold = total_n ? multiplier * total_sum / static_cast<double>(total_n) : 0.0;
    for (std::size_t r = 0; r < blocks.size(); ++r) {
        const std::size_t u = unit_of[r];
        const double threshold = multiplier * unit_sum[u] / static_cast<double>(unit_n[u]);
        for (float v : blocks[r]->values) {
            unit_hits[u] += static_cast<double>(v) > threshold ? 1 : 0;
            pooled_hits += static_cast<double>(v) > pooled_threshold ? 1 : 0;
        }
    }
    double mean = 0.0;
    for (std::size_t u = 0; u < out.ids.size(); ++u) {
        const double d = unit_n[u] ? static_cast<double>(unit_hits[u]) / static_cast<double>(unit_n[u]) : 0.0;
        out.per_unit.push_back(d);
        mean += d;
    }
    out.mean = out.ids.empty() ? 0.0 : mean / static_cast<double>(out.ids.size());
    out.pooled = total_n ? static_cast<double>(pooled_hits) / static_cast<double>(total_n) : 0.0;
    return out;
}

Audit audit(const MaskSet& masks, const Allocation& alloc) {
    const auto requested = alloc.ratios_for(masks);
    const auto ids = unit_ids(masks, alloc.granularity);
    const auto unit_of = block_units(masks, alloc.granularity);
    Audit out;
    out.units.resize(ids.size());
    std::vector<std::size_t> min_cols(ids.size(), 0);
    std::size_t r = 0;
    for (const auto& layer : masks.layers) {
        for (const auto& block : layer.blocks) {
            const std::size_t u = unit_of[r++];
            out.units[u].pruned += block.pruned();
            out.units[u].total += block.size();
            min_cols[u] = min_cols[u] == 0 ? block.cols : std::min(min_cols[u], block.cols);
        }
    }
    for (std::size_t u = 0; u < ids.size(); ++u) {
        UnitAudit& a = out.units[u];
        a.id = ids[u];
        a.requested = requested[u];
        a.achieved = a.total ? static_cast<double>(a.pruned) / static_cast<double>(a.total) : 0.0;
        const double bound = min_cols[u] ? 1.0 / static_cast<double>(min_cols[u]) : 0.0;
        a.flagged = std::fabs(a.achieved - a.requested) > bound + 1e-12;
        out.pruned += a.pruned;
        out.total += a.total;
        out.flagged += a.flagged ? 1 : 0;
    }
    out.achieved = out.total ? static_cast<double>(out.pruned) / static_cast<double>(out.total) : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Reports

Report evaluate(const EvalInputs& in) {
    if (in.dense == nullptr || in.masks == nullptr || in.alloc == nullptr) {
        fail(Errc::InvalidArgument, "evaluation needs a model, masks and an allocation");
    }
    const Model& dense = *in.dense;
    const Allocation& alloc = *in.alloc;
    require_same_layout(dense, *in.masks, "masks");
    const Audit checked = audit(*in.masks, alloc);
    const Model pruned = apply_masks(dense, *in.masks);
    const ScoreSet post = score_model(pruned, in.metric, in.calib);
    const LodSummary outliers = lod(post, in.outlier_multiplier, alloc.granularity);

    Report report;
    report.target_sparsity = alloc.target_sparsity;
    report.achieved_sparsity = checked.achieved;
    report.lod_pooled = outliers.pooled;
    report.lod_mean = outliers.mean;
    report.outlier_multiplier = in.outlier_multiplier;
    report.allocator = alloc.allocator;
    report.metric = std::string(metric_name(in.metric));
    report.aggregator = alloc.aggregator;
    report.granularity = std::string(granularity_name(alloc.granularity));
    if (auto it = dense.attributes.find("gen.seed"); it != dense.attributes.end()) {
        report.seed = it->second;
    }

    std::unordered_map<std::string, std::optional<double>> importance;
    for (const auto& unit : alloc.units) {
        importance.emplace(unit.id, unit.importance);
    }
    for (std::size_t u = 0; u < checked.units.size(); ++u) {
        UnitReport ur;
        ur.id = checked.units[u].id;
        ur.requested = checked.units[u].requested;
        ur.achieved = checked.units[u].achieved;
        ur.importance = importance.at(ur.id);
        ur.lod = outliers.per_unit[u];
        ur.flagged = checked.units[u].flagged;
        report.units.push_back(std::move(ur));
    }

    const bool chain = std::all_of(dense.layers.begin(), dense.layers.end(),
                                   [](const Layer& l) { return l.blocks.size() == 1; });
    if (in.batch != nullptr && chain) {
        report.divergence = divergence(dense, pruned, *in.batch);
        const ForwardResult fwd = forward(dense, *in.batch);
        const auto unit_of = block_units(dense, alloc.granularity);
        std::vector<double> err(report.units.size(), 0.0);
        for (std::size_t l = 0; l < dense.layers.size(); ++l) {
            err[unit_of[l]] += reconstruction_error_rows(dense.layers[l].blocks[0].weights,
                                                         pruned.layers[l].blocks[0].weights, fwd.inputs[l]);
        }
        for (std::size_t u = 0; u < err.size(); ++u) {
            report.units[u].reconstruction_error = err[u];
        }
    }
    return report;
}

std::string Report::to_json() const {
    using ordered_json = nlohmann::ordered_json;
    auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    ordered_json j;
    j["format"] = "sforge.report";
    j["version"] = 1;
    ordered_json g;
    g["target_sparsity"] = target_sparsity;
    g["achieved_sparsity"] = achieved_sparsity;
    g["divergence"] = opt(divergence);
    g["lod_pooled"] = lod_pooled;
    g["lod_mean"] = lod_mean;
    g["outlier_multiplier"] = outlier_multiplier;
    g["allocator"] = allocator;
    g["metric"] = metric;
    g["aggregator"] = aggregator;
    g["granularity"] = granularity;
    g["seed"] = seed;
    j["global"] = std::move(g);
    ordered_json units_json = ordered_json::array();
    for (const auto& u : units) {
        ordered_json uj;
        uj["id"] = u.id;
        uj["requested_sparsity"] = u.requested;
        uj["achieved_sparsity"] = u.achieved;
        uj["importance"] = opt(u.importance);
        uj["lod"] = u.lod;
        uj["reconstruction_error"] = opt(u.reconstruction_error);
        uj["flagged"] = u.flagged;
        units_json.push_back(std::move(uj));
    }
    j["units"] = std::move(units_json);
    ordered_json cfg = ordered_json::object();
    for (const auto& [k, v] : config) {
        cfg[k] = v;
    }
    j["config"] = std::move(cfg);
    return j.dump(2) + "\n";
}

std::string Report::to_csv() const {
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    std::string out =
        "row,unit,requested_sparsity,achieved_sparsity,importance,lod,reconstruction_error,divergence,"
        "flagged\n";
    for (const auto& u : units) {
        out += "unit," + csv_field(u.id) + "," + format_double(u.requested) + "," + format_double(u.achieved) + "," +
               opt(u.importance) + "," + format_double(u.lod) + "," + opt(u.reconstruction_error) + ",," +
               (u.flagged ? "1" : "0") + "\n";
    }
    out += "global,," + format_double(target_sparsity) + "," + format_double(achieved_sparsity) + ",," +
           format_double(lod_pooled) + ",," + opt(divergence) + ",\n";
    return out;
}

}  // namespace sforge
