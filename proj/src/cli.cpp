#include "sforge/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sforge/allocator.hpp"
#include "sforge/evalbench.hpp"
#include "sforge/importance.hpp"
#include "sforge/io.hpp"
#include "sforge/metrics.hpp"
#include "sforge/pruner.hpp"

namespace sforge {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

const std::vector<std::string> kMetrics = {"magnitude", "wanda", "sparsegpt"};
const std::vector<std::string> kAggregators = {"sum", "mean", "median", "max", "var", "sd"};
const std::vector<std::string> kAllocators = {"dlp", "uniform", "global", "er", "er-plus", "lamp", "owl"};
const std::vector<std::string> kGranularities = {"per-layer", "per-block"};
const std::vector<std::string> kScopes = {"per-output", "whole-matrix", "global"};
const std::vector<std::string> kReductions = {"concatenate", "sum-of-blocks"};

/// Shortest text that parses back to the same double.
std::string num(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

std::string join(const std::vector<std::string>& items, char sep) {
    std::string out;
    for (const auto& item : items) {
        out += (out.empty() ? "" : std::string(1, sep)) + item;
    }
    return out;
}

/// Every flag a subcommand may take. Unused fields keep their defaults.
struct Options {
    std::string name;
    std::string model_stem, calib_stem, scores_stem, alloc_stem, mask_stem, batch_stem;
    bool force = false;

    std::size_t layers = 8;
    std::size_t rows = 64;
    std::size_t cols = 64;
    std::uint64_t seed = 0;
    double base_scale = 0.5;
    double gradient = 0.6;
    double outlier_rate = 0.05;
    double outlier_factor = 10.0;
    double skip_gain = 1.0;
    double channel_spread = 0.5;
    std::string activation = "identity";
    std::size_t calib_rows = 256;
    std::size_t eval_rows = 256;
    bool no_gram = false;

    std::string metric = "wanda";
    std::optional<std::string> eval_metric;
    std::string damping = "auto";
    std::string aggregator = "median";
    std::string granularity = "per-layer";
    std::string layer_reduction = "concatenate";
    std::string allocator = "dlp";
    double sparsity = 0.0;
    std::optional<double> alpha;
    std::size_t nm_m = 0;
    double outlier_m = 7.0;
    std::string scope = "per-output";
    std::vector<std::string> allocators = kAllocators;
};

/// Resolved settings of one invocation; echoed on stdout and stamped into
/// every artifact it writes.
class Run {
public:
    explicit Run(std::string command) : command_(std::move(command)) {}

    void path(const std::string& flag, const std::string& value) { paths_.emplace_back(flag, value); }
    void set(const std::string& flag, const std::string& value) { settings_.emplace_back(flag, value); }
    void set_switch(const std::string& flag) { switches_.push_back(flag); }
    void set_seed(const std::string& seed) { seed_ = seed; }

    std::vector<std::string> argv() const {
        std::vector<std::string> out{command_};
        for (const auto& [flag, value] : paths_) {
            out.push_back("--" + flag);
            out.push_back(value);
        }
        for (const auto& [flag, value] : settings_) {
            out.push_back("--" + flag);
            out.push_back(value);
        }
        for (const auto& flag : switches_) {
            out.push_back("--" + flag);
        }
        return out;
    }

    ordered_json config() const {
        ordered_json j = ordered_json::object();
        j["command"] = command_;
        for (const auto& [flag, value] : settings_) {
            j[flag] = value;
        }
        for (const auto& flag : switches_) {
            j[flag] = "true";
        }
        if (seed_) {
            j["seed"] = *seed_;
        }
        return j;
    }

    /// Generator provenance of `inherited` plus this run's settings.
    Attributes attributes(const Attributes& inherited) const {
        Attributes out;
        for (const auto& [key, value] : inherited) {
            if (key.rfind("gen.", 0) == 0) {
                out[key] = value;
            }
        }
        const ordered_json cfg = config();
        for (const auto& [key, value] : cfg.items()) {
            out[command_ + "." + key] = value.get<std::string>();
        }
        return out;
    }

    ordered_json echo(ordered_json result) const {
        ordered_json j;
        j["command"] = command_;
        j["argv"] = argv();
        j["config"] = config();
        j["result"] = std::move(result);
        return j;
    }

private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> paths_;
    std::vector<std::pair<std::string, std::string>> settings_;
    std::vector<std::string> switches_;
    std::optional<std::string> seed_;
};

void guard_outputs(const std::vector<fs::path>& files, bool force) {
    if (force) {
        return;
    }
    for (const auto& f : files) {
        if (fs::exists(f)) {
            fail(Errc::FileExists, "'" + f.string() + "' already exists (pass --force to overwrite)");
        }
    }
}

std::vector<fs::path> concat(std::initializer_list<std::vector<fs::path>> lists) {
    std::vector<fs::path> out;
    for (const auto& l : lists) {
        out.insert(out.end(), l.begin(), l.end());
    }
    return out;
}

std::string seed_of(const Model& model) {
    auto it = model.attributes.find("gen.seed");
    return it == model.attributes.end() ? std::string("none") : it->second;
}

/// Stem for an artifact: the explicit override if given, else --name.
class Stems {
public:
    Stems(const Options& o, Run& run) : o_(o), run_(run) { run_.path("name", o.name); }

    fs::path get(const std::string& flag, const std::string& override_value) const {
        if (!override_value.empty()) {
            run_.path(flag, override_value);
            return override_value;
        }
        return o_.name;
    }
    fs::path model() const { return get("model", o_.model_stem); }
    fs::path calib() const { return get("calib", o_.calib_stem); }
    fs::path scores() const { return get("scores", o_.scores_stem); }
    fs::path alloc() const { return get("alloc", o_.alloc_stem); }
    fs::path mask() const { return get("mask", o_.mask_stem); }
    fs::path batch() const { return get("batch", o_.batch_stem); }
    fs::path out() const { return o_.name; }

private:
    const Options& o_;
    Run& run_;
};

MetricKind metric_of(const std::string& name) {
    auto m = parse_metric(name);
    if (!m) {
        fail(Errc::InvalidArgument, "unknown metric '" + name + "'");
    }
    return *m;
}

Granularity granularity_of(const std::string& name) {
    auto g = parse_granularity(name);
    if (!g) {
        fail(Errc::InvalidArgument, "unknown granularity '" + name + "'");
    }
    return *g;
}

bool needs_calib(MetricKind m) { return m != MetricKind::Magnitude; }

bool uses_scores(const std::string& allocator) {
    return allocator == "dlp" || allocator == "owl" || allocator == "global";
}

bool uses_alpha(const std::string& allocator) { return allocator == "dlp" || allocator == "owl"; }

// --- shared pipeline steps --------------------------------------------------

struct AllocSettings {
    std::string allocator;
    double sparsity = 0.0;
    double alpha = 0.0;
    Granularity granularity = Granularity::PerLayer;
    Aggregator aggregator = Aggregator::Median;
    LayerReduction reduction = LayerReduction::Concatenate;
    std::size_t nm_m = 0;
    double outlier_m = 7.0;
};

Allocation build_allocation(const Model& model, const ScoreSet* scores, const AllocSettings& s) {
    const DlpConfig cfg{s.sparsity, s.alpha};
    if (s.nm_m != 0 && s.allocator != "dlp") {
        fail(Errc::InvalidArgument, "--nm-m is only supported with the dlp allocator");
    }
    if (uses_scores(s.allocator)) {
        if (scores == nullptr) {
            fail(Errc::InvalidArgument, s.allocator + " needs scores");
        }
        require_same_layout(model, *scores, "scores");
    }

    Allocation alloc;
    if (s.allocator == "dlp") {
        const ImportanceVector imp = rid(unimportance(*scores, s.granularity, s.aggregator, s.reduction));
        alloc = dlp_allocate(imp, cfg);
        alloc.aggregator = std::string(aggregator_name(s.aggregator));
        if (s.nm_m != 0) {
            NMScheme scheme = nm_allocate(imp, s.nm_m, cfg);
            for (std::size_t u = 0; u < alloc.units.size(); ++u) {
                alloc.units[u].sparsity =
                    1.0 - static_cast<double>(scheme.kept[u]) / static_cast<double>(scheme.group);
            }
            alloc.nm = std::move(scheme);
        }
    } else if (s.allocator == "owl") {
        const LodSummary d = lod(*scores, s.outlier_m, s.granularity);
        alloc = owl_allocate(d.ids, d.per_unit, s.granularity, cfg);
    } else if (s.allocator == "uniform") {
        alloc = uniform_allocate(model, s.sparsity, s.granularity);
    } else if (s.allocator == "er" || s.allocator == "er-plus") {
        alloc = er_allocate(model, s.sparsity, s.allocator == "er-plus", s.granularity);
    } else if (s.allocator == "global") {
        alloc = allocation_from_masks(prune_global(*scores, s.sparsity), s.granularity, "global", s.sparsity);
    } else if (s.allocator == "lamp") {
        alloc = allocation_from_masks(prune_lamp(model, s.sparsity, s.granularity), s.granularity, "lamp",
                                      s.sparsity);
    } else {
        fail(Errc::InvalidArgument, "unknown allocator '" + s.allocator + "'");
    }
    alloc.metric = scores != nullptr && uses_scores(s.allocator) ? std::string(metric_name(scores->metric))
                                                                 : std::string("none");
    if (alloc.aggregator.empty()) {
        alloc.aggregator = "none";
    }
    alloc.validate_against(model);
    return alloc;
}

/// Which pruning routine an allocation calls for.
std::string selection_of(const Allocation& alloc, SelectionScope scope) {
    if (alloc.nm) {
        return "n:m";
    }
    if (alloc.allocator == "lamp") {
        return "lamp";
    }
    if (alloc.allocator == "global" || scope == SelectionScope::GlobalAcrossModel) {
        return "global";
    }
    return std::string(scope_name(scope));
}

bool selection_uses_scores(const std::string& selection) { return selection != "lamp"; }

MaskSet build_masks(const Model& model, const ScoreSet* scores, const Allocation& alloc, SelectionScope scope) {
    const std::string selection = selection_of(alloc, scope);
    if (selection == "lamp") {
        return prune_lamp(model, alloc.target_sparsity, alloc.granularity);
    }
    if (scores == nullptr) {
        fail(Errc::InvalidArgument, "pruning needs scores");
    }
    require_same_layout(model, *scores, "scores");
    if (selection == "n:m") {
        return prune_nm(*scores, *alloc.nm);
    }
    if (selection == "global") {
        return prune_global(*scores, alloc.target_sparsity);
    }
    return prune_unstructured(*scores, alloc, scope);
}

ordered_json units_json(const Allocation& alloc) {
    ordered_json units = ordered_json::array();
    for (const auto& u : alloc.units) {
        ordered_json j;
        j["id"] = u.id;
        j["sparsity"] = u.sparsity;
        j["importance"] = u.importance ? ordered_json(*u.importance) : ordered_json(nullptr);
        units.push_back(std::move(j));
    }
    return units;
}

ordered_json report_summary(const Report& r) {
    ordered_json j;
    j["target_sparsity"] = r.target_sparsity;
    j["achieved_sparsity"] = r.achieved_sparsity;
    j["divergence"] = r.divergence ? ordered_json(*r.divergence) : ordered_json(nullptr);
    j["lod_pooled"] = r.lod_pooled;
    j["lod_mean"] = r.lod_mean;
    std::size_t flagged = 0;
    for (const auto& u : r.units) {
        flagged += u.flagged ? 1 : 0;
    }
    j["flagged_units"] = flagged;
    return j;
}

std::optional<Matrix> load_batch_if_present(const fs::path& stem) {
    if (!fs::exists(io::manifest_path(stem, io::Kind::Batch))) {
        return std::nullopt;
    }
    return io::load_batch(stem);
}

// --- subcommands -------------------------------------------------------------

ordered_json cmd_gen(const Options& o, Run& run) {
    Stems stems(o, run);
    SynthConfig cfg;
    cfg.layers = o.layers;
    cfg.rows = o.rows;
    cfg.cols = o.cols;
    cfg.seed = o.seed;
    cfg.base_scale = o.base_scale;
    cfg.redundancy_gradient = o.gradient;
    cfg.outlier_rates = {o.outlier_rate};
    cfg.outlier_factor = o.outlier_factor;
    cfg.skip_gain = o.skip_gain;
    cfg.channel_spread = o.channel_spread;
    cfg.activation = *parse_activation(o.activation);
    cfg.calib_rows = o.calib_rows;
    cfg.eval_rows = o.eval_rows;
    cfg.with_gram = !o.no_gram;
    run.set("layers", std::to_string(o.layers));
    run.set("rows", std::to_string(o.rows));
    run.set("cols", std::to_string(o.cols));
    run.set("seed", std::to_string(o.seed));
    run.set("base-scale", num(o.base_scale));
    run.set("gradient", num(o.gradient));
    run.set("outlier-rate", num(o.outlier_rate));
    run.set("outlier-factor", num(o.outlier_factor));
    run.set("skip-gain", num(o.skip_gain));
    run.set("channel-spread", num(o.channel_spread));
    run.set("activation", o.activation);
    run.set("calib-rows", std::to_string(o.calib_rows));
    run.set("eval-rows", std::to_string(o.eval_rows));
    if (o.no_gram) {
        run.set_switch("no-gram");
    }
    cfg.validate();

    const fs::path out = stems.out();
    guard_outputs(concat({io::artifact_files(out, io::Kind::Model), io::artifact_files(out, io::Kind::Calib),
                          io::artifact_files(out, io::Kind::Batch)}),
                  o.force);
    SynthBundle bundle = gen_synthetic(cfg);
    bundle.model.attributes = run.attributes(bundle.model.attributes);
    bundle.calib.attributes = bundle.model.attributes;
    io::save_model(bundle.model, out);
    io::save_calib(bundle.calib, out);
    io::save_batch(bundle.eval_batch, out);

    ordered_json r;
    r["model"] = io::manifest_path(out, io::Kind::Model).string();
    r["calib"] = io::manifest_path(out, io::Kind::Calib).string();
    r["batch"] = io::manifest_path(out, io::Kind::Batch).string();
    r["layers"] = bundle.model.layers.size();
    r["weights"] = bundle.model.weight_count();
    return r;
}

ordered_json cmd_score(const Options& o, Run& run) {
    Stems stems(o, run);
    const MetricKind metric = metric_of(o.metric);
    run.set("metric", o.metric);
    std::optional<double> lambda;
    if (o.damping != "auto") {
        lambda = std::stod(o.damping);
        run.set("damping", num(*lambda));
    } else {
        run.set("damping", "auto");
    }
    const fs::path model_stem = stems.model();
    const fs::path calib_stem = needs_calib(metric) ? stems.calib() : fs::path();
    const fs::path out = stems.out();
    guard_outputs(io::artifact_files(out, io::Kind::Scores), o.force);

    const Model model = io::load_model(model_stem);
    run.set_seed(seed_of(model));
    std::optional<CalibStats> calib;
    if (needs_calib(metric)) {
        calib = io::load_calib(calib_stem);
    }
    ScoreSet scores = score_model(model, metric, calib ? &*calib : nullptr, lambda);
    scores.attributes = run.attributes(model.attributes);
    io::save_scores(scores, out);

    ordered_json r;
    r["scores"] = io::manifest_path(out, io::Kind::Scores).string();
    r["metric"] = o.metric;
    r["blocks"] = model.block_count();
    return r;
}

ordered_json cmd_importance(const Options& o, Run& run) {
    Stems stems(o, run);
    const Granularity g = granularity_of(o.granularity);
    const Aggregator agg = *parse_aggregator(o.aggregator);
    const LayerReduction red = *parse_layer_reduction(o.layer_reduction);
    run.set("aggregator", o.aggregator);
    run.set("granularity", o.granularity);
    if (red != LayerReduction::Concatenate) {
        run.set("layer-reduction", o.layer_reduction);
    }
    const fs::path scores_stem = stems.scores();
    fs::path out = stems.out();
    out += ".rid.json";
    guard_outputs({out}, o.force);

    const ScoreSet scores = io::load_scores(scores_stem);
    const UnimportanceVector s = unimportance(scores, g, agg, red);
    const ImportanceVector imp = rid(s);

    ordered_json units = ordered_json::array();
    for (std::size_t u = 0; u < s.ids.size(); ++u) {
        ordered_json j;
        j["id"] = s.ids[u];
        j["unimportance"] = s.values[u];
        j["importance"] = imp.values[u];
        units.push_back(std::move(j));
    }
    ordered_json doc;
    doc["format"] = "sforge.rid";
    doc["version"] = 1;
    doc["metric"] = metric_name(scores.metric);
    doc["aggregator"] = o.aggregator;
    doc["granularity"] = o.granularity;
    doc["layer_reduction"] = o.layer_reduction;
    doc["units"] = units;
    ordered_json attrs = ordered_json::object();
    for (const auto& [k, v] : run.attributes(scores.attributes)) {
        attrs[k] = v;
    }
    doc["attributes"] = std::move(attrs);
    io::write_text(out, doc.dump(2) + "\n");

    ordered_json r;
    r["rid"] = out.string();
    r["units"] = std::move(units);
    return r;
}

ordered_json cmd_allocate(const Options& o, Run& run) {
    Stems stems(o, run);
    AllocSettings s;
    s.allocator = o.allocator;
    s.sparsity = o.sparsity;
    s.granularity = granularity_of(o.granularity);
    s.aggregator = *parse_aggregator(o.aggregator);
    s.reduction = *parse_layer_reduction(o.layer_reduction);
    s.nm_m = o.nm_m;
    s.outlier_m = o.outlier_m;
    s.alpha = o.alpha.value_or(default_alpha(o.sparsity));

    run.set("allocator", o.allocator);
    run.set("sparsity", num(o.sparsity));
    run.set("granularity", o.granularity);
    if (uses_alpha(o.allocator)) {
        run.set("alpha", num(s.alpha));
    }
    if (o.allocator == "dlp") {
        run.set("aggregator", o.aggregator);
        if (s.reduction != LayerReduction::Concatenate) {
            run.set("layer-reduction", o.layer_reduction);
        }
        if (o.nm_m != 0) {
            run.set("nm-m", std::to_string(o.nm_m));
        }
    }
    if (o.allocator == "owl") {
        run.set("outlier-m", num(o.outlier_m));
    }

    const fs::path model_stem = stems.model();
    const fs::path scores_stem = uses_scores(o.allocator) ? stems.scores() : fs::path();
    const fs::path out = stems.out();
    guard_outputs(io::artifact_files(out, io::Kind::Allocation), o.force);

    const Model model = io::load_model(model_stem);
    run.set_seed(seed_of(model));
    std::optional<ScoreSet> scores;
    if (uses_scores(o.allocator)) {
        scores = io::load_scores(scores_stem);
    }
    Allocation alloc = build_allocation(model, scores ? &*scores : nullptr, s);
    alloc.attributes = run.attributes(model.attributes);
    io::save_allocation(alloc, out);

    ordered_json r;
    r["alloc"] = io::manifest_path(out, io::Kind::Allocation).string();
    r["allocator"] = alloc.allocator;
    r["alpha"] = alloc.alpha ? ordered_json(*alloc.alpha) : ordered_json(nullptr);
    r["units"] = units_json(alloc);
    if (alloc.nm) {
        r["nm_group"] = alloc.nm->group;
        r["nm_kept"] = alloc.nm->kept;
    }
    return r;
}

ordered_json cmd_prune(const Options& o, Run& run) {
    Stems stems(o, run);
    const SelectionScope scope = *parse_scope(o.scope);
    run.set("scope", o.scope);
    const fs::path model_stem = stems.model();
    const fs::path alloc_stem = stems.alloc();
    const fs::path out = stems.out();
    guard_outputs(io::artifact_files(out, io::Kind::Masks), o.force);

    const Model model = io::load_model(model_stem);
    run.set_seed(seed_of(model));
    const Allocation alloc = io::load_allocation(alloc_stem, model);
    const std::string selection = selection_of(alloc, scope);
    std::optional<ScoreSet> scores;
    if (selection_uses_scores(selection)) {
        scores = io::load_scores(stems.scores());
    }
    MaskSet masks = build_masks(model, scores ? &*scores : nullptr, alloc, scope);
    masks.attributes = run.attributes(model.attributes);
    io::save_masks(masks, out);

    std::size_t kept = 0;
    std::size_t total = 0;
    for (const auto& layer : masks.layers) {
        for (const auto& block : layer.blocks) {
            kept += block.kept;
            total += block.size();
        }
    }
    ordered_json r;
    r["mask"] = io::manifest_path(out, io::Kind::Masks).string();
    r["selection"] = selection;
    r["kept"] = kept;
    r["total"] = total;
    r["achieved_sparsity"] = total ? static_cast<double>(total - kept) / static_cast<double>(total) : 0.0;
    return r;
}

ordered_json cmd_eval(const Options& o, Run& run) {
    Stems stems(o, run);
    const fs::path model_stem = stems.model();
    const fs::path mask_stem = stems.mask();
    const fs::path alloc_stem = stems.alloc();
    const fs::path out = stems.out();
    fs::path json_out = out;
    json_out += ".report.json";
    fs::path csv_out = out;
    csv_out += ".report.csv";
    guard_outputs({json_out, csv_out}, o.force);

    const Model model = io::load_model(model_stem);
    const MaskSet masks = io::load_masks(mask_stem);
    const Allocation alloc = io::load_allocation(alloc_stem, model);
    std::string metric = o.eval_metric.value_or(parse_metric(alloc.metric) ? alloc.metric : "wanda");
    const MetricKind kind = metric_of(metric);
    run.set("metric", metric);
    run.set("outlier-m", num(o.outlier_m));
    run.set_seed(seed_of(model));

    std::optional<CalibStats> calib;
    if (needs_calib(kind)) {
        calib = io::load_calib(stems.calib());
    }
    const std::optional<Matrix> batch = load_batch_if_present(stems.batch());

    EvalInputs in;
    in.dense = &model;
    in.masks = &masks;
    in.alloc = &alloc;
    in.calib = calib ? &*calib : nullptr;
    in.batch = batch ? &*batch : nullptr;
    in.metric = kind;
    in.outlier_multiplier = o.outlier_m;
    Report report = evaluate(in);
    report.config = run.attributes(model.attributes);
    io::write_text(json_out, report.to_json());
    io::write_text(csv_out, report.to_csv());

    ordered_json r = report_summary(report);
    r["report"] = json_out.string();
    r["csv"] = csv_out.string();
    return r;
}

ordered_json cmd_lod(const Options& o, Run& run) {
    Stems stems(o, run);
    const Granularity g = granularity_of(o.granularity);
    run.set("granularity", o.granularity);
    run.set("outlier-m", num(o.outlier_m));
    ScoreSet scores = io::load_scores(stems.scores());
    std::string basis = "dense";
    if (!o.mask_stem.empty()) {
        // Post-pruning LOD: rescore the masked weights with the same metric.
        const Model model = io::load_model(stems.model());
        const MaskSet masks = io::load_masks(stems.mask());
        std::optional<CalibStats> calib;
        if (needs_calib(scores.metric)) {
            calib = io::load_calib(stems.calib());
        }
        scores = score_model(apply_masks(model, masks), scores.metric, calib ? &*calib : nullptr);
        basis = "masked";
    }
    const LodSummary d = lod(scores, o.outlier_m, g);
    ordered_json units = ordered_json::array();
    for (std::size_t u = 0; u < d.ids.size(); ++u) {
        ordered_json j;
        j["id"] = d.ids[u];
        j["lod"] = d.per_unit[u];
        units.push_back(std::move(j));
    }
    ordered_json r;
    r["basis"] = basis;
    r["metric"] = metric_name(scores.metric);
    r["pooled"] = d.pooled;
    r["mean"] = d.mean;
    r["units"] = std::move(units);
    return r;
}

ordered_json cmd_compare(const Options& o, Run& run) {
    Stems stems(o, run);
    const MetricKind metric = metric_of(o.metric);
    const SelectionScope scope = *parse_scope(o.scope);
    AllocSettings s;
    s.sparsity = o.sparsity;
    s.alpha = o.alpha.value_or(default_alpha(o.sparsity));
    s.granularity = granularity_of(o.granularity);
    s.aggregator = *parse_aggregator(o.aggregator);
    s.reduction = *parse_layer_reduction(o.layer_reduction);
    s.outlier_m = o.outlier_m;
    run.set("allocators", join(o.allocators, ','));
    run.set("sparsity", num(o.sparsity));
    run.set("alpha", num(s.alpha));
    run.set("metric", o.metric);
    run.set("aggregator", o.aggregator);
    run.set("granularity", o.granularity);
    run.set("scope", o.scope);
    run.set("outlier-m", num(o.outlier_m));
    if (s.reduction != LayerReduction::Concatenate) {
        run.set("layer-reduction", o.layer_reduction);
    }

    const fs::path model_stem = stems.model();
    fs::path out = stems.out();
    out += ".compare.csv";
    guard_outputs({out}, o.force);

    const Model model = io::load_model(model_stem);
    run.set_seed(seed_of(model));
    std::optional<CalibStats> calib;
    if (needs_calib(metric)) {
        calib = io::load_calib(stems.calib());
    }
    const std::optional<Matrix> batch = load_batch_if_present(stems.batch());
    const ScoreSet scores = score_model(model, metric, calib ? &*calib : nullptr);

    std::string csv;
    ordered_json results = ordered_json::array();
    for (const auto& name : o.allocators) {
        AllocSettings cell = s;
        cell.allocator = name;
        const Allocation alloc = build_allocation(model, &scores, cell);
        const MaskSet masks = build_masks(model, &scores, alloc, scope);
        EvalInputs in;
        in.dense = &model;
        in.masks = &masks;
        in.alloc = &alloc;
        in.calib = calib ? &*calib : nullptr;
        in.batch = batch ? &*batch : nullptr;
        in.metric = metric;
        in.outlier_multiplier = o.outlier_m;
        const Report report = evaluate(in);

        std::istringstream lines(report.to_csv());
        std::string line;
        bool header = true;
        while (std::getline(lines, line)) {
            if (header) {
                header = false;
                if (csv.empty()) {
                    csv = "allocator," + line + "\n";
                }
                continue;
            }
            csv += name + "," + line + "\n";
        }
        ordered_json row;
        row["allocator"] = name;
        row["selection"] = selection_of(alloc, scope);
        const ordered_json summary = report_summary(report);
        for (const auto& [k, v] : summary.items()) {
            row[k] = v;
        }
        results.push_back(std::move(row));
    }
    io::write_text(out, csv);

    ordered_json r;
    r["csv"] = out.string();
    r["allocators"] = std::move(results);
    return r;
}

// --- wiring --------------------------------------------------------------------

void add_stem_options(CLI::App* sub, Options& o, std::initializer_list<std::string> inputs) {
    sub->add_option("--name,--out", o.name, "Artifact stem (directory/prefix) for inputs and outputs")
        ->required();
    for (const auto& input : inputs) {
        std::string* target = nullptr;
        if (input == "model") target = &o.model_stem;
        if (input == "calib") target = &o.calib_stem;
        if (input == "scores") target = &o.scores_stem;
        if (input == "alloc") target = &o.alloc_stem;
        if (input == "mask") target = &o.mask_stem;
        if (input == "batch") target = &o.batch_stem;
        sub->add_option("--" + input, *target, "Stem of the " + input + " artifact (default: --name)");
    }
}

void add_force(CLI::App* sub, Options& o) {
    sub->add_flag("--force", o.force, "Overwrite existing outputs");
}

CLI::Option* add_choice(CLI::App* sub, const std::string& flag, std::string& target,
                        const std::vector<std::string>& choices, const std::string& help) {
    return sub->add_option(flag, target, help + " {" + join(choices, ',') + "}")
        ->check(CLI::IsMember(choices))
        ->capture_default_str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Layerwise sparsity allocation and pruning toolkit", "sforge"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    std::map<std::string, std::function<ordered_json(const Options&, Run&)>> handlers;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic model, calibration stats and a held-out batch");
    add_stem_options(gen, o, {});
    gen->add_option("--layers", o.layers)->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--rows", o.rows)->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--cols", o.cols)->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--seed", o.seed)->capture_default_str();
    gen->add_option("--base-scale", o.base_scale)->capture_default_str();
    gen->add_option("--gradient", o.gradient, "Depth decay of the branch scale")->capture_default_str();
    gen->add_option("--outlier-rate", o.outlier_rate)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    gen->add_option("--outlier-factor", o.outlier_factor)->capture_default_str();
    gen->add_option("--skip-gain", o.skip_gain)->capture_default_str();
    gen->add_option("--channel-spread", o.channel_spread)->capture_default_str();
    add_choice(gen, "--activation", o.activation, {"identity", "relu"}, "Layer activation");
    gen->add_option("--calib-rows", o.calib_rows)->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--eval-rows", o.eval_rows)->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_flag("--no-gram", o.no_gram, "Skip the Gram matrices (magnitude/wanda only)");
    add_force(gen, o);
    handlers["gen"] = cmd_gen;

    auto* score = app.add_subcommand("score", "Compute per-weight saliency scores");
    add_stem_options(score, o, {"model", "calib"});
    add_choice(score, "--metric", o.metric, kMetrics, "Saliency metric");
    score->add_option("--damping", o.damping, "SparseGPT damping lambda, or 'auto'")
        ->check([](const std::string& v) -> std::string {
            if (v == "auto") return {};
            try {
                std::size_t used = 0;
                const double x = std::stod(v, &used);
                if (used == v.size() && x >= 0.0) return {};
            } catch (const std::exception&) {
            }
            return "damping must be 'auto' or a number >= 0";
        })
        ->capture_default_str();
    add_force(score, o);
    handlers["score"] = cmd_score;

    auto* importance = app.add_subcommand("importance", "Layer unimportance and relative importance");
    add_stem_options(importance, o, {"scores"});
    add_choice(importance, "--aggregator", o.aggregator, kAggregators, "Layer aggregator");
    add_choice(importance, "--granularity", o.granularity, kGranularities, "Allocation unit");
    add_choice(importance, "--layer-reduction", o.layer_reduction, kReductions, "")->group("");
    add_force(importance, o);
    handlers["importance"] = cmd_importance;

    auto* allocate = app.add_subcommand("allocate", "Assign a sparsity ratio to every unit");
    add_stem_options(allocate, o, {"model", "scores"});
    add_choice(allocate, "--allocator", o.allocator, kAllocators, "Allocation strategy");
    allocate->add_option("--sparsity", o.sparsity, "Global target sparsity p")
        ->required()
        ->check(CLI::Range(0.0, 1.0));
    allocate->add_option("--alpha", o.alpha, "Deflation scale (default: tuned per sparsity)")
        ->check(CLI::NonNegativeNumber);
    add_choice(allocate, "--aggregator", o.aggregator, kAggregators, "Layer aggregator");
    add_choice(allocate, "--granularity", o.granularity, kGranularities, "Allocation unit");
    add_choice(allocate, "--layer-reduction", o.layer_reduction, kReductions, "")->group("");
    allocate->add_option("--nm-m", o.nm_m, "Mixed N:M group size (4 or 8); 0 = unstructured")
        ->check(CLI::IsMember({0, 4, 8}))
        ->capture_default_str();
    allocate->add_option("--outlier-m", o.outlier_m, "Outlier multiplier for owl")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    add_force(allocate, o);
    handlers["allocate"] = cmd_allocate;

    auto* prune = app.add_subcommand("prune", "Build masks from scores and an allocation");
    add_stem_options(prune, o, {"model", "scores", "alloc"});
    add_choice(prune, "--scope", o.scope, kScopes, "Selection scope");
    add_force(prune, o);
    handlers["prune"] = cmd_prune;

    auto* eval = app.add_subcommand("eval", "Audit masks and measure the pruned model");
    add_stem_options(eval, o, {"model", "calib", "alloc", "mask", "batch"});
    eval->add_option("--metric", o.eval_metric, "Metric for the post-pruning LOD (default: the allocation's)")
        ->check(CLI::IsMember(kMetrics));
    eval->add_option("--outlier-m", o.outlier_m)->check(CLI::PositiveNumber)->capture_default_str();
    add_force(eval, o);
    handlers["eval"] = cmd_eval;

    auto* lod_cmd = app.add_subcommand("lod", "Layerwise outlier distribution of a score set");
    add_stem_options(lod_cmd, o, {"scores", "model", "calib", "mask"});
    add_choice(lod_cmd, "--granularity", o.granularity, kGranularities, "Allocation unit");
    lod_cmd->add_option("--outlier-m", o.outlier_m)->check(CLI::PositiveNumber)->capture_default_str();
    handlers["lod"] = cmd_lod;

    auto* compare = app.add_subcommand("compare", "Run a grid of allocators on one model");
    add_stem_options(compare, o, {"model", "calib", "batch"});
    compare->add_option("--allocators", o.allocators, "Allocators to run")
        ->delimiter(',')
        ->check(CLI::IsMember(kAllocators));
    compare->add_option("--sparsity", o.sparsity)->required()->check(CLI::Range(0.0, 1.0));
    compare->add_option("--alpha", o.alpha)->check(CLI::NonNegativeNumber);
    add_choice(compare, "--metric", o.metric, kMetrics, "Saliency metric");
    add_choice(compare, "--aggregator", o.aggregator, kAggregators, "Layer aggregator");
    add_choice(compare, "--granularity", o.granularity, kGranularities, "Allocation unit");
    add_choice(compare, "--scope", o.scope, kScopes, "Selection scope");
    add_choice(compare, "--layer-reduction", o.layer_reduction, kReductions, "")->group("");
    compare->add_option("--outlier-m", o.outlier_m)->check(CLI::PositiveNumber)->capture_default_str();
    add_force(compare, o);
    handlers["compare"] = cmd_compare;

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    Run run(command);
    try {
        ordered_json result = handlers.at(command)(o, run);
        out << run.echo(std::move(result)).dump() << "\n";
        return kExitOk;
    } catch (const Error& e) {
        err << "ERROR " << errc_name(e.code()) << ": " << e.what() << "\n";
        return kExitDomainError;
    } catch (const std::exception& e) {
        err << "ERROR IoError: " << e.what() << "\n";
        return kExitDomainError;
    }
}

}  // namespace sforge
