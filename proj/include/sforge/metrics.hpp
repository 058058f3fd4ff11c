#pragma once

#include <optional>
#include <span>

#include "sforge/artifacts.hpp"
#include "sforge/model.hpp"

namespace sforge {

/// A_ij = |W_ij|.
Matrix magnitude_scores(const Matrix& weights);

/// A_ij = |W_ij| * col_norms[j]. Throws DimMismatch unless
/// col_norms.size() == weights.cols.
Matrix wanda_scores(const Matrix& weights, std::span<const float> col_norms);

/// E_ij = W_ij^2 / [(G + lambda I)^-1]_jj, with the inverse diagonal taken
/// from a double-precision Cholesky factorization of the full damped matrix.
/// Throws SingularHessian when a pivot falls below 1e-12 of the largest
/// damped diagonal entry, DimMismatch on shape errors.
Matrix sparsegpt_scores(const Matrix& weights, const Matrix& gram, double lambda);

/// Diagonal of (G + lambda I)^-1 (exposed for tests and diagnostics).
std::vector<double> damped_inverse_diagonal(const Matrix& gram, double lambda);

/// 0.01 * mean(diag(G)), floored at 1e-8.
double default_damping(const Matrix& gram);

/// Column norms and Gram matrix of X (rows = samples), accumulated in double.
/// Throws EmptyInput for zero rows and NonFiniteActivation on NaN/Inf.
BlockCalib build_block_calib(std::string name, const Matrix& inputs, bool with_gram = true);

/// Calibration statistics of a single-block-per-layer model from the
/// per-layer input matrices (as returned by forward()).
CalibStats build_calib_stats(const Model& model, std::span<const Matrix> layer_inputs,
                             bool with_gram = true);

/// Scores every block of `model`. Wanda needs col_norms, SparseGptDiag needs
/// Gram matrices (MissingGram otherwise). `lambda` overrides the per-block
/// default_damping. Blocks are scored in parallel.
ScoreSet score_model(const Model& model, MetricKind metric, const CalibStats* calib,
                     std::optional<double> lambda = std::nullopt);

}  // namespace sforge
