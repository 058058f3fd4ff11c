#include "sforge/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sforge::io {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr int kFormatVersion = 1;

std::string_view suffix(Kind kind) {
    switch (kind) {
        case Kind::Model: return "model";
        case Kind::Calib: return "calib";
        case Kind::Scores: return "scores";
        case Kind::Masks: return "mask";
        case Kind::Batch: return "batch";
        case Kind::Allocation: return "alloc";
    }
    return "model";
}

fs::path with_suffix(const fs::path& stem, Kind kind, std::string_view ext) {
    fs::path out = stem;
    out += ".";
    out += std::string(suffix(kind));
    out += std::string(ext);
    return out;
}

// --- raw bytes -------------------------------------------------------------

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(Errc::IoError, "cannot open '" + path.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(Errc::IoError, "cannot write '" + path.string() + "'");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(Errc::IoError, "short write to '" + path.string() + "'");
    }
}

class BlobWriter {
public:
    std::size_t offset() const noexcept { return bytes_.size(); }

    void put_floats(std::span<const float> values) {
        bytes_.reserve(bytes_.size() + values.size() * 4);
        for (float v : values) {
            const auto bits = std::bit_cast<std::uint32_t>(v);
            for (int shift = 0; shift < 32; shift += 8) {
                bytes_.push_back(static_cast<std::uint8_t>(bits >> shift));
            }
        }
    }

    void put_bytes(std::span<const std::uint8_t> raw) {
        bytes_.insert(bytes_.end(), raw.begin(), raw.end());
    }

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Sequential reader over a blob; every region must start where the
/// previous one ended.
class BlobReader {
public:
    BlobReader(std::vector<std::uint8_t> bytes, std::string what)
        : bytes_(std::move(bytes)), what_(std::move(what)) {}

    std::span<const std::uint8_t> take(const json& region, std::size_t expected_bytes,
                                       const std::string& where) {
        const auto offset = region.at("offset").get<std::size_t>();
        const auto length = region.at("bytes").get<std::size_t>();
        if (length != expected_bytes) {
            fail(Errc::ManifestMismatch, where + ": declares " + std::to_string(length) +
                                             " bytes but its shape needs " +
                                             std::to_string(expected_bytes));
        }
        if (offset != cursor_) {
            fail(Errc::ManifestMismatch, where + ": region starts at byte " + std::to_string(offset) +
                                             ", expected " + std::to_string(cursor_));
        }
        if (offset + length > bytes_.size()) {
            fail(Errc::ManifestMismatch, where + ": region runs past the end of " + what_ + " (" +
                                             std::to_string(bytes_.size()) + " bytes)");
        }
        cursor_ += length;
        return {bytes_.data() + offset, length};
    }

    std::vector<float> take_floats(const json& region, std::size_t count, const std::string& where) {
        auto raw = take(region, count * 4, where);
        std::vector<float> out(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                bits |= static_cast<std::uint32_t>(raw[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
            }
            out[i] = std::bit_cast<float>(bits);
        }
        return out;
    }

    void finish() const {
        if (cursor_ != bytes_.size()) {
            fail(Errc::ManifestMismatch, what_ + " holds " + std::to_string(bytes_.size()) +
                                             " bytes but the manifest accounts for " +
                                             std::to_string(cursor_));
        }
    }

private:
    std::vector<std::uint8_t> bytes_;
    std::string what_;
    std::size_t cursor_ = 0;
};

ordered_json region(std::size_t offset, std::size_t length) {
    ordered_json r;
    r["offset"] = offset;
    r["bytes"] = length;
    return r;
}

// --- manifests ---------------------------------------------------------------

ordered_json manifest_header(std::string_view format, const fs::path& blob, std::size_t blob_bytes) {
    ordered_json j;
    j["format"] = format;
    j["version"] = kFormatVersion;
    j["dtype"] = "f32-le";
    j["blob"] = blob.filename().string();
    j["blob_bytes"] = blob_bytes;
    return j;
}

void write_json(const fs::path& path, const ordered_json& j) {
    write_text(path, j.dump(2) + "\n");
}

json read_json(const fs::path& path) {
    auto bytes = read_bytes(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        fail(Errc::FormatError, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

void require_format(const json& j, std::string_view format, const fs::path& path) {
    if (!j.is_object() || j.value("format", "") != format) {
        fail(Errc::FormatError, "'" + path.string() + "' is not a " + std::string(format) + " manifest");
    }
    if (j.value("version", 0) != kFormatVersion) {
        fail(Errc::FormatError, "'" + path.string() + "' has unsupported version");
    }
}

/// Reads the blob named by `manifest` and checks its size against blob_bytes.
BlobReader open_blob(const json& manifest, const fs::path& manifest_file) {
    const fs::path blob = manifest_file.parent_path() / manifest.at("blob").get<std::string>();
    auto bytes = read_bytes(blob);
    const auto declared = manifest.at("blob_bytes").get<std::size_t>();
    if (bytes.size() != declared) {
        fail(Errc::ManifestMismatch, "'" + blob.string() + "' holds " + std::to_string(bytes.size()) +
                                         " bytes, manifest declares " + std::to_string(declared));
    }
    return BlobReader(std::move(bytes), "'" + blob.string() + "'");
}

ordered_json attributes_json(const Attributes& attributes) {
    ordered_json j = ordered_json::object();
    for (const auto& [key, value] : attributes) {
        j[key] = value;
    }
    return j;
}

Attributes read_attributes(const json& manifest) {
    Attributes out;
    if (auto it = manifest.find("attributes"); it != manifest.end()) {
        for (const auto& [key, value] : it->items()) {
            out[key] = value.get<std::string>();
        }
    }
    return out;
}

/// Runs `body` and converts JSON access errors into FormatError.
template <class Fn>
auto guarded(const fs::path& path, Fn&& body) {
    try {
        return body();
    } catch (const json::exception& e) {
        fail(Errc::FormatError, "'" + path.string() + "': " + e.what());
    }
}

std::size_t positive_dim(const json& j, const char* key, const std::string& where) {
    const auto value = j.at(key).get<std::int64_t>();
    if (value < 1) {
        fail(Errc::ManifestMismatch, where + ": " + key + " must be >= 1");
    }
    return static_cast<std::size_t>(value);
}

}  // namespace

std::vector<fs::path> artifact_files(const fs::path& stem, Kind kind) {
    if (kind == Kind::Allocation) {
        return {with_suffix(stem, kind, ".json")};
    }
    return {with_suffix(stem, kind, ".json"), with_suffix(stem, kind, ".bin")};
}

fs::path manifest_path(const fs::path& stem, Kind kind) { return with_suffix(stem, kind, ".json"); }

void write_text(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(Errc::IoError, "cannot write '" + path.string() + "'");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        fail(Errc::IoError, "short write to '" + path.string() + "'");
    }
}

// --- model -------------------------------------------------------------------

void save_model(const Model& model, const fs::path& stem) {
    model.validate();
    const auto files = artifact_files(stem, Kind::Model);
    BlobWriter blob;
    ordered_json layers = ordered_json::array();
    for (const auto& layer : model.layers) {
        ordered_json blocks = ordered_json::array();
        for (const auto& block : layer.blocks) {
            ordered_json b;
            b["name"] = block.name;
            b["rows"] = block.weights.rows;
            b["cols"] = block.weights.cols;
            const std::size_t offset = blob.offset();
            blob.put_floats(block.weights.values);
            b["data"] = region(offset, blob.offset() - offset);
            blocks.push_back(std::move(b));
        }
        ordered_json l;
        l["name"] = layer.name;
        l["activation"] = activation_name(layer.activation);
        l["blocks"] = std::move(blocks);
        layers.push_back(std::move(l));
    }
    ordered_json j = manifest_header("sforge.model", files[1], blob.offset());
    j["attributes"] = attributes_json(model.attributes);
    j["layers"] = std::move(layers);
    write_json(files[0], j);
    write_bytes(files[1], blob.bytes());
}

Model load_model(const fs::path& stem) {
    const fs::path path = manifest_path(stem, Kind::Model);
    const json j = read_json(path);
    require_format(j, "sforge.model", path);
    Model model = guarded(path, [&] {
        BlobReader blob = open_blob(j, path);
        Model m;
        m.attributes = read_attributes(j);
        for (const auto& l : j.at("layers")) {
            Layer layer;
            layer.name = l.at("name").get<std::string>();
            const auto act_name = l.at("activation").get<std::string>();
            auto act = parse_activation(act_name);
            if (!act) {
                fail(Errc::FormatError, "layer '" + layer.name + "': unknown activation '" + act_name + "'");
            }
            layer.activation = *act;
            for (const auto& b : l.at("blocks")) {
                Block block;
                block.name = b.at("name").get<std::string>();
                const std::string where = block_unit_id(layer.name, block.name);
                const std::size_t rows = positive_dim(b, "rows", where);
                const std::size_t cols = positive_dim(b, "cols", where);
                block.weights.rows = rows;
                block.weights.cols = cols;
                block.weights.values = blob.take_floats(b.at("data"), rows * cols, where);
                layer.blocks.push_back(std::move(block));
            }
            m.layers.push_back(std::move(layer));
        }
        blob.finish();
        return m;
    });
    model.validate();
    return model;
}

// --- calibration -------------------------------------------------------------

void save_calib(const CalibStats& calib, const fs::path& stem) {
    calib.validate();
    const auto files = artifact_files(stem, Kind::Calib);
    BlobWriter blob;
    ordered_json layers = ordered_json::array();
    for (const auto& layer : calib.layers) {
        ordered_json blocks = ordered_json::array();
        for (const auto& block : layer.blocks) {
            ordered_json b;
            b["name"] = block.name;
            b["cols"] = block.col_norms.size();
            b["sample_count"] = block.sample_count;
            std::size_t offset = blob.offset();
            blob.put_floats(block.col_norms);
            b["col_norms"] = region(offset, blob.offset() - offset);
            if (block.gram) {
                offset = blob.offset();
                blob.put_floats(block.gram->values);
                b["gram"] = region(offset, blob.offset() - offset);
            } else {
                b["gram"] = nullptr;
            }
            blocks.push_back(std::move(b));
        }
        ordered_json l;
        l["name"] = layer.name;
        l["blocks"] = std::move(blocks);
        layers.push_back(std::move(l));
    }
    ordered_json j = manifest_header("sforge.calib", files[1], blob.offset());
    j["attributes"] = attributes_json(calib.attributes);
    j["layers"] = std::move(layers);
    write_json(files[0], j);
    write_bytes(files[1], blob.bytes());
}

CalibStats load_calib(const fs::path& stem) {
    const fs::path path = manifest_path(stem, Kind::Calib);
    const json j = read_json(path);
    require_format(j, "sforge.calib", path);
    CalibStats calib = guarded(path, [&] {
        BlobReader blob = open_blob(j, path);
        CalibStats c;
        c.attributes = read_attributes(j);
        for (const auto& l : j.at("layers")) {
            LayerCalib layer;
            layer.name = l.at("name").get<std::string>();
            for (const auto& b : l.at("blocks")) {
                BlockCalib block;
                block.name = b.at("name").get<std::string>();
                const std::string where = block_unit_id(layer.name, block.name);
                const std::size_t cols = positive_dim(b, "cols", where);
                block.sample_count = b.at("sample_count").get<std::uint64_t>();
                block.col_norms = blob.take_floats(b.at("col_norms"), cols, where + " col_norms");
                if (const auto& g = b.at("gram"); !g.is_null()) {
                    Matrix gram;
                    gram.rows = cols;
                    gram.cols = cols;
                    gram.values = blob.take_floats(g, cols * cols, where + " gram");
                    block.gram = std::move(gram);
                }
                layer.blocks.push_back(std::move(block));
            }
            c.layers.push_back(std::move(layer));
        }
        blob.finish();
        return c;
    });
    calib.validate();
    return calib;
}

// --- scores ------------------------------------------------------------------

void save_scores(const ScoreSet& scores, const fs::path& stem) {
    scores.validate();
    const auto files = artifact_files(stem, Kind::Scores);
    BlobWriter blob;
    ordered_json layers = ordered_json::array();
    for (const auto& layer : scores.layers) {
        ordered_json blocks = ordered_json::array();
        for (const auto& block : layer.blocks) {
            ordered_json b;
            b["name"] = block.name;
            b["rows"] = block.scores.rows;
            b["cols"] = block.scores.cols;
            const std::size_t offset = blob.offset();
            blob.put_floats(block.scores.values);
            b["data"] = region(offset, blob.offset() - offset);
            blocks.push_back(std::move(b));
        }
        ordered_json l;
        l["name"] = layer.name;
        l["blocks"] = std::move(blocks);
        layers.push_back(std::move(l));
    }
    ordered_json j = manifest_header("sforge.scores", files[1], blob.offset());
    j["metric"] = metric_name(scores.metric);
    j["attributes"] = attributes_json(scores.attributes);
    j["layers"] = std::move(layers);
    write_json(files[0], j);
    write_bytes(files[1], blob.bytes());
}

ScoreSet load_scores(const fs::path& stem) {
    const fs::path path = manifest_path(stem, Kind::Scores);
    const json j = read_json(path);
    require_format(j, "sforge.scores", path);
    ScoreSet scores = guarded(path, [&] {
        BlobReader blob = open_blob(j, path);
        ScoreSet s;
        const auto metric = j.at("metric").get<std::string>();
        auto kind = parse_metric(metric);
        if (!kind) {
            fail(Errc::FormatError, "unknown metric '" + metric + "'");
        }
        s.metric = *kind;
        s.attributes = read_attributes(j);
        for (const auto& l : j.at("layers")) {
            LayerScores layer;
            layer.name = l.at("name").get<std::string>();
            for (const auto& b : l.at("blocks")) {
                BlockScores block;
                block.name = b.at("name").get<std::string>();
                const std::string where = block_unit_id(layer.name, block.name);
                block.scores.rows = positive_dim(b, "rows", where);
                block.scores.cols = positive_dim(b, "cols", where);
                block.scores.values =
                    blob.take_floats(b.at("data"), block.scores.rows * block.scores.cols, where);
                layer.blocks.push_back(std::move(block));
            }
            s.layers.push_back(std::move(layer));
        }
        blob.finish();
        return s;
    });
    scores.validate();
    return scores;
}

// --- masks -------------------------------------------------------------------

void save_masks(const MaskSet& masks, const fs::path& stem) {
    masks.validate();
    const auto files = artifact_files(stem, Kind::Masks);
    BlobWriter blob;
    ordered_json layers = ordered_json::array();
    for (const auto& layer : masks.layers) {
        ordered_json blocks = ordered_json::array();
        for (const auto& block : layer.blocks) {
            ordered_json b;
            b["name"] = block.name;
            b["rows"] = block.rows;
            b["cols"] = block.cols;
            b["kept"] = block.kept;
            const std::size_t offset = blob.offset();
            blob.put_bytes(block.bits);
            b["bits"] = region(offset, blob.offset() - offset);
            blocks.push_back(std::move(b));
        }
        ordered_json l;
        l["name"] = layer.name;
        l["blocks"] = std::move(blocks);
        layers.push_back(std::move(l));
    }
    ordered_json j = manifest_header("sforge.mask", files[1], blob.offset());
    j["dtype"] = "bits";
    j["bit_order"] = "row-major-lsb-first";
    j["attributes"] = attributes_json(masks.attributes);
    j["layers"] = std::move(layers);
    write_json(files[0], j);
    write_bytes(files[1], blob.bytes());
}

MaskSet load_masks(const fs::path& stem) {
    const fs::path path = manifest_path(stem, Kind::Masks);
    const json j = read_json(path);
    require_format(j, "sforge.mask", path);
    if (j.value("bit_order", "") != "row-major-lsb-first") {
        fail(Errc::FormatError, "'" + path.string() + "': unsupported bit order");
    }
    MaskSet masks = guarded(path, [&] {
        BlobReader blob = open_blob(j, path);
        MaskSet m;
        m.attributes = read_attributes(j);
        for (const auto& l : j.at("layers")) {
            LayerMasks layer;
            layer.name = l.at("name").get<std::string>();
            for (const auto& b : l.at("blocks")) {
                BlockMask block;
                block.name = b.at("name").get<std::string>();
                const std::string where = block_unit_id(layer.name, block.name);
                block.rows = positive_dim(b, "rows", where);
                block.cols = positive_dim(b, "cols", where);
                block.kept = b.at("kept").get<std::size_t>();
                auto raw = blob.take(b.at("bits"), (block.size() + 7) / 8, where);
                block.bits.assign(raw.begin(), raw.end());
                layer.blocks.push_back(std::move(block));
            }
            m.layers.push_back(std::move(layer));
        }
        blob.finish();
        return m;
    });
    masks.validate();
    return masks;
}

// --- batch -------------------------------------------------------------------

void save_batch(const Matrix& batch, const fs::path& stem) {
    const auto files = artifact_files(stem, Kind::Batch);
    BlobWriter blob;
    blob.put_floats(batch.values);
    ordered_json j = manifest_header("sforge.batch", files[1], blob.offset());
    j["rows"] = batch.rows;
    j["cols"] = batch.cols;
    j["data"] = region(0, blob.offset());
    write_json(files[0], j);
    write_bytes(files[1], blob.bytes());
}

Matrix load_batch(const fs::path& stem) {
    const fs::path path = manifest_path(stem, Kind::Batch);
    const json j = read_json(path);
    require_format(j, "sforge.batch", path);
    Matrix batch = guarded(path, [&] {
        BlobReader blob = open_blob(j, path);
        Matrix m;
        m.rows = positive_dim(j, "rows", "batch");
        m.cols = positive_dim(j, "cols", "batch");
        m.values = blob.take_floats(j.at("data"), m.rows * m.cols, "batch");
        blob.finish();
        return m;
    });
    for (float v : batch.values) {
        if (!std::isfinite(v)) {
            fail(Errc::NonFiniteActivation, "'" + path.string() + "' holds a non-finite value");
        }
    }
    return batch;
}

// --- allocation --------------------------------------------------------------

void save_allocation(const Allocation& alloc, const fs::path& stem) {
    ordered_json units = ordered_json::array();
    for (const auto& unit : alloc.units) {
        ordered_json u;
        u["id"] = unit.id;
        u["sparsity"] = unit.sparsity;
        if (unit.importance) {
            u["importance"] = *unit.importance;
        } else {
            u["importance"] = nullptr;
        }
        units.push_back(std::move(u));
    }
    ordered_json j;
    j["format"] = "sforge.alloc";
    j["version"] = kFormatVersion;
    j["granularity"] = granularity_name(alloc.granularity);
    j["allocator"] = alloc.allocator;
    j["metric"] = alloc.metric;
    j["aggregator"] = alloc.aggregator;
    j["target_sparsity"] = alloc.target_sparsity;
    if (alloc.alpha) {
        j["alpha"] = *alloc.alpha;
    } else {
        j["alpha"] = nullptr;
    }
    j["units"] = std::move(units);
    if (alloc.nm) {
        ordered_json nm;
        nm["group"] = alloc.nm->group;
        nm["granularity"] = granularity_name(alloc.nm->granularity);
        ordered_json kept = ordered_json::array();
        for (std::size_t i = 0; i < alloc.nm->units.size(); ++i) {
            ordered_json u;
            u["id"] = alloc.nm->units[i];
            u["kept"] = alloc.nm->kept[i];
            kept.push_back(std::move(u));
        }
        nm["units"] = std::move(kept);
        j["nm"] = std::move(nm);
    } else {
        j["nm"] = nullptr;
    }
    j["attributes"] = attributes_json(alloc.attributes);
    write_json(manifest_path(stem, Kind::Allocation), j);
}

Allocation load_allocation(const fs::path& stem) {
    const fs::path path = manifest_path(stem, Kind::Allocation);
    const json j = read_json(path);
    require_format(j, "sforge.alloc", path);
    Allocation alloc = guarded(path, [&] {
        Allocation a;
        const auto gran = j.at("granularity").get<std::string>();
        auto g = parse_granularity(gran);
        if (!g) {
            fail(Errc::FormatError, "unknown granularity '" + gran + "'");
        }
        a.granularity = *g;
        a.allocator = j.at("allocator").get<std::string>();
        a.metric = j.at("metric").get<std::string>();
        a.aggregator = j.at("aggregator").get<std::string>();
        a.target_sparsity = j.at("target_sparsity").get<double>();
        if (const auto& alpha = j.at("alpha"); !alpha.is_null()) {
            a.alpha = alpha.get<double>();
        }
        std::set<std::string> seen;
        for (const auto& u : j.at("units")) {
            UnitAllocation unit;
            unit.id = u.at("id").get<std::string>();
            unit.sparsity = u.at("sparsity").get<double>();
            if (const auto& imp = u.at("importance"); !imp.is_null()) {
                unit.importance = imp.get<double>();
            }
            if (!seen.insert(unit.id).second) {
                fail(Errc::DuplicateName, "allocation lists unit '" + unit.id + "' twice");
            }
            if (!(unit.sparsity >= 0.0 && unit.sparsity <= 1.0)) {
                fail(Errc::InvalidArgument, "sparsity of unit '" + unit.id + "' is outside [0, 1]");
            }
            a.units.push_back(std::move(unit));
        }
        if (const auto& nm = j.at("nm"); !nm.is_null()) {
            NMScheme scheme;
            scheme.group = nm.at("group").get<std::size_t>();
            const auto ng = nm.at("granularity").get<std::string>();
            auto parsed = parse_granularity(ng);
            if (!parsed) {
                fail(Errc::FormatError, "unknown granularity '" + ng + "'");
            }
            scheme.granularity = *parsed;
            for (const auto& u : nm.at("units")) {
                scheme.units.push_back(u.at("id").get<std::string>());
                scheme.kept.push_back(u.at("kept").get<std::size_t>());
            }
            a.nm = std::move(scheme);
        }
        a.attributes = read_attributes(j);
        return a;
    });
    return alloc;
}

Allocation load_allocation(const fs::path& stem, const Model& model) {
    Allocation alloc = load_allocation(stem);
    alloc.validate_against(model);
    return alloc;
}

}  // namespace sforge::io
