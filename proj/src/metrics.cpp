#include "sforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sforge/parallel.hpp"
#include "sforge/stats.hpp"

namespace sforge {

Matrix magnitude_scores(const Matrix& weights) {
    require_finite<float>(weights.values, "weights");
    Matrix out(weights.rows, weights.cols);
    std::transform(weights.values.begin(), weights.values.end(), out.values.begin(),
                   [](float w) { return std::fabs(w); });
    return out;
}

Matrix wanda_scores(const Matrix& weights, std::span<const float> col_norms) {
    if (col_norms.size() != weights.cols) {
        fail(Errc::DimMismatch, "wanda: " + std::to_string(col_norms.size()) +
                                    " column norms for a block with " +
                                    std::to_string(weights.cols) + " columns");
    }
    require_finite<float>(weights.values, "weights");
    require_finite<float>(col_norms, "column norms");
    Matrix out(weights.rows, weights.cols);
    for (std::size_t i = 0; i < weights.rows; ++i) {
        for (std::size_t j = 0; j < weights.cols; ++j) {
            out(i, j) = std::fabs(weights(i, j)) * col_norms[j];
        }
    }
    return out;
}

std::vector<double> damped_inverse_diagonal(const Matrix& gram, double lambda) {
    const std::size_t n = gram.rows;
    if (gram.cols != n || gram.values.size() != n * n) {
        fail(Errc::DimMismatch, "gram must be square");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        fail(Errc::InvalidArgument, "damping must be finite and >= 0");
    }

    // Lower-triangular Cholesky factor of G + lambda I, row-major.
    std::vector<double> chol(n * n, 0.0);
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        max_diag = std::max(max_diag, static_cast<double>(gram(i, i)) + lambda);
    }
    const double tiny = 1e-12 * max_diag;
    for (std::size_t j = 0; j < n; ++j) {
        double pivot = static_cast<double>(gram(j, j)) + lambda;
        for (std::size_t k = 0; k < j; ++k) {
            pivot -= chol[j * n + k] * chol[j * n + k];
        }
        if (!(pivot > tiny)) {
            fail(Errc::SingularHessian, "damped Hessian is singular at column " + std::to_string(j) +
                                            " (pivot " + std::to_string(pivot) + ")");
        }
        const double ljj = std::sqrt(pivot);
        chol[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double acc = static_cast<double>(gram(i, j));
            for (std::size_t k = 0; k < j; ++k) {
                acc -= chol[i * n + k] * chol[j * n + k];
            }
            chol[i * n + j] = acc / ljj;
        }
    }

    // inv(A) = inv(L)^T inv(L), so inv(A)_jj is the squared norm of column j
    // of inv(L). That column solves L y = e_j and is zero above row j.
    std::vector<double> diag(n, 0.0);
    parallel_for(n, [&](std::size_t j) {
        std::vector<double> y(n, 0.0);
        double total = 0.0;
        for (std::size_t i = j; i < n; ++i) {
            double acc = i == j ? 1.0 : 0.0;
            for (std::size_t k = j; k < i; ++k) {
                acc -= chol[i * n + k] * y[k];
            }
            y[i] = acc / chol[i * n + i];
            total += y[i] * y[i];
        }
        diag[j] = total;
    });
    return diag;
}

Matrix sparsegpt_scores(const Matrix& weights, const Matrix& gram, double lambda) {
    if (gram.rows != weights.cols || gram.cols != weights.cols) {
        fail(Errc::DimMismatch, "sparsegpt: gram is " + std::to_string(gram.rows) + "x" +
                                    std::to_string(gram.cols) + " for a block with " +
                                    std::to_string(weights.cols) + " columns");
    }
    require_finite<float>(weights.values, "weights");
    const auto inv_diag = damped_inverse_diagonal(gram, lambda);
    Matrix out(weights.rows, weights.cols);
    for (std::size_t i = 0; i < weights.rows; ++i) {
        for (std::size_t j = 0; j < weights.cols; ++j) {
            const double w = weights(i, j);
            out(i, j) = static_cast<float>(w * w / inv_diag[j]);
        }
    }
    return out;
}

double default_damping(const Matrix& gram) {
    const std::size_t n = std::min(gram.rows, gram.cols);
    if (n == 0) {
        return 1e-8;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += gram(i, i);
    }
    return std::max(0.01 * total / static_cast<double>(n), 1e-8);
}

BlockCalib build_block_calib(std::string name, const Matrix& inputs, bool with_gram) {
    if (inputs.rows == 0 || inputs.cols == 0) {
        fail(Errc::EmptyInput, "calibration input for '" + name + "' has no rows");
    }
    for (float v : inputs.values) {
        if (!std::isfinite(v)) {
            fail(Errc::NonFiniteActivation, "calibration input for '" + name + "' is not finite");
        }
    }
    const std::size_t n = inputs.cols;
    std::vector<double> g(n * n, 0.0);
    parallel_for(n, [&](std::size_t a) {
        for (std::size_t r = 0; r < inputs.rows; ++r) {
            const double xa = inputs(r, a);
            if (xa == 0.0) {
                continue;
            }
            for (std::size_t b = a; b < n; ++b) {
                g[a * n + b] += xa * inputs(r, b);
            }
        }
    });

    BlockCalib calib;
    calib.name = std::move(name);
    calib.sample_count = inputs.rows;
    calib.col_norms.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        calib.col_norms[j] = static_cast<float>(std::sqrt(g[j * n + j]));
    }
    if (with_gram) {
        Matrix gram(n, n);
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a; b < n; ++b) {
                gram(a, b) = gram(b, a) = static_cast<float>(g[a * n + b]);
            }
        }
        calib.gram = std::move(gram);
    }
    return calib;
}

CalibStats build_calib_stats(const Model& model, std::span<const Matrix> layer_inputs, bool with_gram) {
    if (layer_inputs.size() != model.layers.size()) {
        fail(Errc::DimMismatch, "expected inputs for " + std::to_string(model.layers.size()) +
                                    " layers, got " + std::to_string(layer_inputs.size()));
    }
    CalibStats stats;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        LayerCalib lc;
        lc.name = layer.name;
        for (const auto& block : layer.blocks) {
            if (layer_inputs[l].cols != block.weights.cols) {
                fail(Errc::DimMismatch, "input of layer '" + layer.name + "' has " +
                                            std::to_string(layer_inputs[l].cols) + " columns, block '" +
                                            block.name + "' expects " +
                                            std::to_string(block.weights.cols));
            }
            lc.blocks.push_back(build_block_calib(block.name, layer_inputs[l], with_gram));
        }
        stats.layers.push_back(std::move(lc));
    }
    return stats;
}

ScoreSet score_model(const Model& model, MetricKind metric, const CalibStats* calib,
                     std::optional<double> lambda) {
    if (metric != MetricKind::Magnitude) {
        if (calib == nullptr) {
            fail(Errc::InvalidArgument, std::string(metric_name(metric)) + " needs calibration statistics");
        }
        require_same_layout(model, *calib, "calibration");
    }

    struct Ref {
        std::size_t layer;
        std::size_t block;
    };
    std::vector<Ref> refs;
    ScoreSet out;
    out.metric = metric;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        LayerScores ls;
        ls.name = model.layers[l].name;
        for (std::size_t b = 0; b < model.layers[l].blocks.size(); ++b) {
            ls.blocks.push_back({model.layers[l].blocks[b].name, {}});
            refs.push_back({l, b});
        }
        out.layers.push_back(std::move(ls));
    }

    parallel_for(refs.size(), [&](std::size_t r) {
        const auto [l, b] = refs[r];
        const Matrix& w = model.layers[l].blocks[b].weights;
        Matrix& dst = out.layers[l].blocks[b].scores;
        switch (metric) {
            case MetricKind::Magnitude:
                dst = magnitude_scores(w);
                break;
            case MetricKind::Wanda:
                dst = wanda_scores(w, calib->layers[l].blocks[b].col_norms);
                break;
            case MetricKind::SparseGptDiag: {
                const auto& gram = calib->layers[l].blocks[b].gram;
                if (!gram) {
                    fail(Errc::MissingGram, "block '" + block_unit_id(model.layers[l].name,
                                                                      model.layers[l].blocks[b].name) +
                                                "' has no Gram matrix");
                }
                dst = sparsegpt_scores(w, *gram, lambda.value_or(default_damping(*gram)));
                break;
            }
        }
    });
    out.validate();
    return out;
}

}  // namespace sforge
