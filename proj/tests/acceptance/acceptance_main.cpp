// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and seed
// counts are fixed here; the process exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sforge/allocator.hpp"
#include "sforge/evalbench.hpp"
#include "sforge/importance.hpp"
#include "sforge/metrics.hpp"
#include "sforge/pruner.hpp"
#include "sforge/stats.hpp"

using namespace sforge;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& check) {
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    g_failures += o.pass ? 0 : 1;
    std::printf("%s %2d %s -- %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

// --- criteria 7-9: the synthetic benchmark ---------------------------------

constexpr int kSeeds = 10;

SynthConfig bench_config(std::uint64_t seed) {
    SynthConfig cfg;  // 8 layers of 64x64, q = 0.05, O = 10, gradient on
    cfg.seed = seed;
    cfg.with_gram = false;
    return cfg;
}

struct Cell {
    double divergence = 0.0;
    double lod_pooled = 0.0;
};

struct Bench {
    SynthBundle bundle;
    ScoreSet scores;

    explicit Bench(std::uint64_t seed) : bundle(gen_synthetic(bench_config(seed))) {
        scores = score_model(bundle.model, MetricKind::Wanda, &bundle.calib);
    }

    Allocation dlp(double p, double alpha, Granularity g) const {
        return dlp_allocate(rid(unimportance(scores, g, Aggregator::Median)), {p, alpha});
    }

    Cell run(const Allocation& alloc, SelectionScope scope) const {
        const MaskSet masks = prune_unstructured(scores, alloc, scope);
        const Model pruned = apply_masks(bundle.model, masks);
        Cell c;
        c.divergence = divergence(bundle.model, pruned, bundle.eval_batch);
        c.lod_pooled = lod(score_model(pruned, MetricKind::Wanda, &bundle.calib), 7.0).pooled;
        return c;
    }
};

std::vector<Bench>& benches() {
    static std::vector<Bench> all = [] {
        std::vector<Bench> v;
        for (int s = 0; s < kSeeds; ++s) {
            v.emplace_back(static_cast<std::uint64_t>(s));
        }
        return v;
    }();
    return all;
}

// --- criterion 11 helpers ---------------------------------------------------

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    }
    return out + "'";
}

struct CliResult {
    int code = -1;
    std::string stdout_text;
};

CliResult run_binary(const std::vector<std::string>& args, const fs::path& dir) {
    std::string cmd = "cd " + shell_quote(dir.string()) + " && " + shell_quote(SFORGE_BINARY);
    for (const auto& a : args) {
        cmd += " " + shell_quote(a);
    }
    cmd += " > stdout.txt 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.stdout_text = read_file(dir / "stdout.txt");
    return r;
}

}  // namespace

int main() {
    std::printf("acceptance: %d criteria\n", 11);

    report(1, "Algorithm-1 exactness", [] {
        const auto start = Clock::now();
        const std::vector<double> imp = {5.0 / 6.0, 2.0 / 3.0, 0.5};
        const DlpTrace t = dlp_trace(imp, {0.7, 0.1});
        const double elapsed = seconds_since(start);
        const double expect[3] = {0.6, 0.7, 0.8};
        double worst = 0.0;
        for (int j = 0; j < 3; ++j) {
            worst = std::max(worst, std::fabs(t.ratios[j] - expect[j]));
        }
        return Outcome{worst <= 1e-9 && elapsed < 1e-3,
                       fmt("max |R - [0.6,0.7,0.8]| = %.3g, %.3g ms", worst, elapsed * 1e3)};
    });

    report(2, "Mean-sparsity preservation and monotonicity", [] {
        const auto start = Clock::now();
        double worst = 0.0;
        int violations = 0;
        for (std::uint64_t s = 0; s < 100; ++s) {
            Rng rng(s, 2);
            const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 30);
            const double alpha = 0.2 * rng.uniform();
            const double p = 2 * alpha + (1 - 4 * alpha) * rng.uniform();
            std::vector<double> imp(n);
            for (double& v : imp) {
                v = rng.uniform();
            }
            const DlpTrace t = dlp_trace(imp, {p, alpha});
            double sum = 0.0;
            for (double r : t.raw) {
                sum += r;
            }
            worst = std::max(worst, std::fabs(sum / static_cast<double>(n) - p));
            for (std::size_t a = 0; a < n; ++a) {
                for (std::size_t b = 0; b < n; ++b) {
                    if (imp[a] > imp[b] && !(t.ratios[a] <= t.ratios[b])) {
                        ++violations;
                    }
                }
            }
        }
        const double elapsed = seconds_since(start);
        return Outcome{worst <= 1e-9 && violations == 0 && elapsed < 1.0,
                       fmt("max |mean(R) - p| = %.3g, %g monotonicity violations, %.3g s", worst, violations,
                           elapsed)};
    });

    report(3, "Uniform reduction at alpha = 0", [] {
        int mismatches = 0;
        for (std::uint64_t s = 0; s < 20; ++s) {
            Rng rng(s, 3);
            const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 12);
            const double p = rng.uniform();
            std::vector<std::pair<std::size_t, std::size_t>> dims(n, {4, 4});
            const Model model = fixture::random_model(s, dims);
            const Allocation uni = uniform_allocate(model, p);
            ImportanceVector imp;
            imp.ids = unit_ids(model, Granularity::PerLayer);
            std::vector<double> lod_values;
            for (std::size_t i = 0; i < n; ++i) {
                imp.values.push_back(rng.uniform());
                lod_values.push_back(rng.uniform() * 0.1);
            }
            const Allocation dlp = dlp_allocate(imp, {p, 0.0});
            const Allocation owl = owl_allocate(imp.ids, lod_values, Granularity::PerLayer, {p, 0.0});
            for (std::size_t i = 0; i < n; ++i) {
                const double u = uni.units[i].sparsity;
                const bool same = std::memcmp(&u, &dlp.units[i].sparsity, sizeof u) == 0 &&
                                  std::memcmp(&u, &owl.units[i].sparsity, sizeof u) == 0 &&
                                  uni.units[i].id == dlp.units[i].id && uni.units[i].id == owl.units[i].id;
                mismatches += same ? 0 : 1;
            }
        }
        return Outcome{mismatches == 0, fmt("%g ratios differ bitwise over 20 instances", mismatches)};
    });

    report(4, "Oracle equivalences", [] {
        const auto start = Clock::now();
        int median_bad = 0;
        int rank_bad = 0;
        for (std::uint64_t s = 0; s < 50; ++s) {
            const auto v = fixture::uniform_values(s, 10000);
            const double got = median(v);
            const double want = oracle::median_by_sort(v);
            median_bad += std::memcmp(&got, &want, sizeof got) == 0 ? 0 : 1;
            const auto idx = rank_smallest<float>(v, 3000);
            rank_bad += std::set<std::size_t>(idx.begin(), idx.end()) == oracle::smallest_by_sort(v, 3000) ? 0 : 1;
        }
        int global_bad = 0;
        int lamp_bad = 0;
        for (std::uint64_t s = 0; s < 20; ++s) {
            const Model model = fixture::random_model(s, {{8, 16}, {12, 8}, {16, 12}, {4, 8}}, 2);
            const ScoreSet scores = fixture::abs_scores(model);
            std::vector<std::vector<float>> blocks;
            std::vector<std::vector<float>> layers;
            for (const auto& layer : model.layers) {
                layers.emplace_back();
                for (const auto& block : layer.blocks) {
                    blocks.push_back(block.weights.values);
                    for (float& x : blocks.back()) {
                        x = std::fabs(x);
                    }
                    layers.back().insert(layers.back().end(), block.weights.values.begin(),
                                         block.weights.values.end());
                }
            }
            for (double p : {0.0, 0.3, 0.5, 0.9}) {
                auto pruned_set = [](const MaskSet& masks) {
                    std::set<std::size_t> out;
                    std::size_t offset = 0;
                    for (const auto& layer : masks.layers) {
                        for (const auto& block : layer.blocks) {
                            for (std::size_t i = 0; i < block.size(); ++i) {
                                if (!block.keep(i)) {
                                    out.insert(offset + i);
                                }
                            }
                            offset += block.size();
                        }
                    }
                    return out;
                };
                global_bad += pruned_set(prune_global(scores, p)) == oracle::global_pruned(blocks, p) ? 0 : 1;
                lamp_bad += pruned_set(prune_lamp(model, p)) == oracle::lamp_pruned(layers, p) ? 0 : 1;
            }
        }
        int nm_bad = 0;
        for (std::uint64_t s = 0; s < 20; ++s) {
            const Model model = fixture::random_model(s, {{8, 16}, {6, 8}});
            const ScoreSet scores = fixture::abs_scores(model);
            for (std::size_t m : {4u, 8u}) {
                for (std::size_t n = 1; n <= m; ++n) {
                    NMScheme scheme{m, Granularity::PerLayer, {"l0", "l1"}, {n, m + 1 - n}};
                    const MaskSet masks = prune_nm(scores, scheme);
                    for (std::size_t l = 0; l < 2; ++l) {
                        const Matrix& a = scores.layers[l].blocks[0].scores;
                        const BlockMask& mask = masks.layers[l].blocks[0];
                        for (std::size_t i = 0; i < a.rows; ++i) {
                            for (std::size_t g = 0; g < a.cols; g += m) {
                                std::vector<float> group(a.values.begin() + static_cast<long>(i * a.cols + g),
                                                         a.values.begin() + static_cast<long>(i * a.cols + g + m));
                                std::set<std::size_t> kept;
                                for (std::size_t t = 0; t < m; ++t) {
                                    if (mask.keep(i, g + t)) {
                                        kept.insert(t);
                                    }
                                }
                                nm_bad += kept == oracle::nm_group_kept(group, scheme.kept[l]) ? 0 : 1;
                            }
                        }
                    }
                }
            }
        }
        const double elapsed = seconds_since(start);
        const bool ok = median_bad + rank_bad + global_bad + lamp_bad + nm_bad == 0 && elapsed < 30.0;
        std::ostringstream d;
        d << "mismatches: median " << median_bad << "/50, rank " << rank_bad << "/50, global " << global_bad
          << "/80, lamp " << lamp_bad << "/80, n:m groups " << nm_bad << "; " << elapsed << " s";
        return Outcome{ok, d.str()};
    });

    report(5, "Sum/Mean equivalence and its scope", [] {
        double worst = 0.0;
        for (std::uint64_t s = 0; s < 10; ++s) {
            const Model model = fixture::random_model(s, {{8, 8}, {16, 4}, {4, 16}, {2, 32}});
            const ScoreSet scores = fixture::abs_scores(model);
            const Allocation a = dlp_allocate(rid(unimportance(scores, Granularity::PerLayer, Aggregator::Sum)),
                                              {0.7, 0.15});
            const Allocation b = dlp_allocate(rid(unimportance(scores, Granularity::PerLayer, Aggregator::Mean)),
                                              {0.7, 0.15});
            for (std::size_t u = 0; u < a.units.size(); ++u) {
                worst = std::max(worst, std::fabs(a.units[u].sparsity - b.units[u].sparsity));
            }
        }
        // Counterexample: a large low-mean layer and a small high-mean layer.
        ScoreSet uneven;
        uneven.layers.push_back({"big", {{"w", Matrix(1, 8, 1.0f)}}});
        uneven.layers.push_back({"small", {{"w", Matrix(1, 2, 2.0f)}}});
        const Allocation sum = dlp_allocate(rid(unimportance(uneven, Granularity::PerLayer, Aggregator::Sum)),
                                            {0.5, 0.1});
        const Allocation mean = dlp_allocate(rid(unimportance(uneven, Granularity::PerLayer, Aggregator::Mean)),
                                             {0.5, 0.1});
        const double gap = std::fabs(sum.units[0].sparsity - mean.units[0].sparsity);
        return Outcome{worst <= 1e-9 && gap > 1e-3,
                       fmt("equal sizes: max diff %.3g; unequal sizes: sum R=%.3g vs mean R=%.3g",
                           worst, sum.units[0].sparsity, mean.units[0].sparsity)};
    });

    report(6, "Mask audits", [] {
        int bad = 0;
        for (std::uint64_t s = 0; s < 20; ++s) {
            Rng rng(s, 6);
            const Model model = fixture::random_model(s, {{16, 24}, {24, 16}, {8, 32}, {12, 8}});
            const ScoreSet scores = fixture::abs_scores(model);
            ImportanceVector imp;
            imp.ids = unit_ids(model, Granularity::PerLayer);
            for (std::size_t i = 0; i < imp.ids.size(); ++i) {
                imp.values.push_back(rng.uniform());
            }
            const Allocation alloc = dlp_allocate(imp, {0.3 + 0.5 * rng.uniform(), 0.1});
            const MaskSet whole = prune_unstructured(scores, alloc, SelectionScope::WholeMatrix);
            const MaskSet rows = prune_unstructured(scores, alloc, SelectionScope::PerOutputRow);
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                const double r = alloc.units[l].sparsity;
                const BlockMask& w = whole.layers[l].blocks[0];
                bad += w.pruned() == static_cast<std::size_t>(std::floor(r * w.size() + 0.5)) ? 0 : 1;
                const BlockMask& m = rows.layers[l].blocks[0];
                const auto want = static_cast<std::size_t>(std::floor(r * m.cols + 0.5));
                for (std::size_t i = 0; i < m.rows; ++i) {
                    std::size_t zeros = 0;
                    for (std::size_t j = 0; j < m.cols; ++j) {
                        zeros += m.keep(i, j) ? 0 : 1;
                    }
                    bad += zeros == want ? 0 : 1;
                }
            }
            const NMScheme scheme = nm_allocate(imp, 4, {0.5, 0.1});
            const MaskSet nm = prune_nm(scores, scheme);
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                const BlockMask& m = nm.layers[l].blocks[0];
                for (std::size_t i = 0; i < m.rows; ++i) {
                    for (std::size_t g = 0; g < m.cols; g += 4) {
                        std::size_t kept = 0;
                        for (std::size_t t = 0; t < 4; ++t) {
                            kept += m.keep(i, g + t) ? 1 : 0;
                        }
                        bad += kept == scheme.kept[l] ? 0 : 1;
                    }
                }
            }
        }
        return Outcome{bad == 0, fmt("%g blocks/rows/groups off their exact count over 20 models", bad)};
    });

    report(7, "Post-pruning LOD: DLP >= uniform", [] {
        const auto start = Clock::now();
        int wins = 0;
        for (const Bench& b : benches()) {
            const Cell dlp = b.run(b.dlp(0.7, 0.15, Granularity::PerLayer), SelectionScope::PerOutputRow);
            const Cell uni = b.run(uniform_allocate(b.bundle.model, 0.7), SelectionScope::PerOutputRow);
            wins += dlp.lod_pooled >= uni.lod_pooled ? 1 : 0;
        }
        const double elapsed = seconds_since(start);
        return Outcome{wins >= 8 && elapsed < 60.0,
                       fmt("pooled LOD (M=7) DLP >= uniform in %g/10 seeds, %.3g s", wins, elapsed)};
    });

    report(8, "Divergence at high and moderate sparsity", [] {
        const auto start = Clock::now();
        int high = 0;
        int moderate = 0;
        for (const Bench& b : benches()) {
            const Cell d7 = b.run(b.dlp(0.7, 0.15, Granularity::PerLayer), SelectionScope::PerOutputRow);
            const Cell u7 = b.run(uniform_allocate(b.bundle.model, 0.7), SelectionScope::PerOutputRow);
            high += d7.divergence < u7.divergence ? 1 : 0;
            const Cell d5 = b.run(b.dlp(0.5, default_alpha(0.5), Granularity::PerLayer), SelectionScope::PerOutputRow);
            const Cell u5 = b.run(uniform_allocate(b.bundle.model, 0.5), SelectionScope::PerOutputRow);
            const double ratio = d5.divergence / u5.divergence;
            moderate += ratio <= 2.0 && ratio >= 0.5 ? 1 : 0;
        }
        const double elapsed = seconds_since(start);
        return Outcome{high >= 8 && moderate >= 8 && elapsed < 120.0,
                       fmt("p=0.7: DLP lower in %g/10; p=0.5: within 2x in %g/10; %.3g s", high, moderate,
                           elapsed)};
    });

    report(9, "Selection scope and allocation granularity", [] {
        int scope_ok = 0;
        int gran_ok = 0;
        for (const Bench& b : benches()) {
            const Allocation alloc = b.dlp(0.7, 0.15, Granularity::PerLayer);
            const Cell row = b.run(alloc, SelectionScope::PerOutputRow);
            const Cell whole = b.run(alloc, SelectionScope::WholeMatrix);
            scope_ok += row.divergence <= whole.divergence ? 1 : 0;
            const Cell block = b.run(b.dlp(0.7, 0.15, Granularity::PerBlock), SelectionScope::PerOutputRow);
            gran_ok += row.divergence <= block.divergence ? 1 : 0;
        }
        return Outcome{scope_ok >= 7 && gran_ok >= 7,
                       fmt("per-output <= whole-matrix in %g/10; per-layer <= per-block in %g/10 "
                           "(one block per layer, so the two granularities coincide)",
                           scope_ok, gran_ok)};
    });

    report(10, "Reconstruction error", [] {
        const Matrix w = Matrix::from_rows({{1, 1}});
        const Matrix w_hat = Matrix::from_rows({{1, 0}});
        const Matrix x = Matrix::from_rows({{1}, {1}});
        const double identity = reconstruction_error(w, w, x);
        const double hand = reconstruction_error(w, w_hat, x);

        // 1000 x 1000 weights, one sample column: 10^6 weight entries.
        const std::size_t n = 1000;
        const Matrix big = fixture::random_matrix(10, n, n);
        Matrix masked = big;
        for (std::size_t i = 0; i < masked.size(); i += 3) {
            masked.values[i] = 0.0f;
        }
        const Matrix col = fixture::random_matrix(11, n, 1);
        const double got = reconstruction_error(big, masked, col);
        std::vector<double> terms;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> prods;
            for (std::size_t j = 0; j < n; ++j) {
                prods.push_back((static_cast<double>(big(i, j)) - masked(i, j)) * col(j, 0));
            }
            const double row = oracle::compensated_sum(prods);
            terms.push_back(row * row);
        }
        const double want = oracle::compensated_sum(terms);
        const double rel = std::fabs(got - want) / want;
        return Outcome{identity == 0.0 && hand == 1.0 && rel <= 1e-6,
                       fmt("identity %.3g, 1x2 example %.3g, 1e6-entry relative error %.3g", identity, hand, rel)};
    });

    report(11, "CLI pipeline and replay", [] {
        const fs::path dir = fixture::temp_dir("acceptance-cli");
        const std::vector<std::vector<std::string>> steps = {
            {"gen", "--layers", "8", "--rows", "64", "--cols", "64", "--seed", "7", "--out", "m"},
            {"score", "--name", "m", "--metric", "wanda"},
            {"allocate", "--name", "m", "--allocator", "dlp", "--sparsity", "0.7", "--alpha", "0.15"},
            {"prune", "--name", "m", "--scope", "per-output"},
            {"eval", "--name", "m"},
        };
        std::vector<std::vector<std::string>> echoed;
        double achieved = -1.0;
        for (const auto& step : steps) {
            const CliResult r = run_binary(step, dir);
            if (r.code != 0) {
                return Outcome{false, step[0] + " exited " + std::to_string(r.code)};
            }
            const auto j = nlohmann::json::parse(r.stdout_text);
            echoed.push_back(j.at("argv").get<std::vector<std::string>>());
            if (step[0] == "eval") {
                achieved = j.at("result").at("achieved_sparsity").get<double>();
            }
        }
        std::vector<std::pair<fs::path, std::string>> first;
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("m.", 0) == 0) {
                first.emplace_back(entry.path(), read_file(entry.path()));
            }
        }
        for (auto argv : echoed) {
            argv.push_back("--force");
            if (run_binary(argv, dir).code != 0) {
                return Outcome{false, "replay of " + argv[0] + " failed"};
            }
        }
        int changed = 0;
        for (const auto& [path, bytes] : first) {
            changed += read_file(path) == bytes ? 0 : 1;
        }
        const bool in_band = achieved >= 0.695 && achieved <= 0.705;
        std::ostringstream d;
        d << "achieved sparsity " << achieved << ", " << first.size() << " files, " << changed
          << " changed on replay";
        return Outcome{in_band && changed == 0 && first.size() >= 12, d.str()};
    });

    std::printf("%s: %d of 11 criteria failed\n", g_failures == 0 ? "OK" : "FAILED", g_failures);
    return g_failures == 0 ? 0 : 1;
}
