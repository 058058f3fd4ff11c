#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "sforge/artifacts.hpp"
#include "sforge/model.hpp"

namespace sforge::io {

namespace fs = std::filesystem;

/// Artifact kinds and their file suffixes. Every artifact is addressed by a
/// stem path `dir/name`; e.g. the model lives in `dir/name.model.json` plus
/// `dir/name.model.bin`.
enum class Kind { Model, Calib, Scores, Masks, Batch, Allocation };

/// Files written for `kind` under `stem` (manifest first, then blob if any).
std::vector<fs::path> artifact_files(const fs::path& stem, Kind kind);
fs::path manifest_path(const fs::path& stem, Kind kind);

// All numeric blob data is little-endian IEEE-754 binary32, blocks stored
// back to back in manifest order with no padding. Mask blobs hold each
// block's bits row-major, LSB-first, padded with zero bits to a whole byte.
// Loaders never repair: each inconsistency raises its named error.

void save_model(const Model& model, const fs::path& stem);
/// Throws ManifestMismatch, NonFiniteWeight, DuplicateName, FormatError, IoError.
Model load_model(const fs::path& stem);

void save_calib(const CalibStats& calib, const fs::path& stem);
/// Throws ManifestMismatch, AsymmetricGram, CalibMismatch, FormatError, IoError.
CalibStats load_calib(const fs::path& stem);

void save_scores(const ScoreSet& scores, const fs::path& stem);
ScoreSet load_scores(const fs::path& stem);

void save_masks(const MaskSet& masks, const fs::path& stem);
/// Throws PopcountMismatch, ManifestMismatch, FormatError, IoError.
MaskSet load_masks(const fs::path& stem);

/// Held-out or calibration input batch (rows = samples).
void save_batch(const Matrix& batch, const fs::path& stem);
Matrix load_batch(const fs::path& stem);

void save_allocation(const Allocation& alloc, const fs::path& stem);
/// Structural checks only (ratios in [0, 1], no duplicate units).
Allocation load_allocation(const fs::path& stem);
/// Also throws UnknownUnit / CoverageGap against `model`.
Allocation load_allocation(const fs::path& stem, const Model& model);

/// Writes `text` to `path`, throwing IoError on failure.
void write_text(const fs::path& path, std::string_view text);

}  // namespace sforge::io
