#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tooldreamer/corpus.hpp"
#include "tooldreamer/embedding.hpp"
#include "tooldreamer/errors.hpp"
#include "tooldreamer/hypothesizer.hpp"

namespace tooldreamer {

/// Similarities between hypothetical tools (rows) and gold tools (columns).
/// Square in the training path; count enforcement guarantees it.
struct SimilarityMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; // row-major
    std::vector<std::string> col_labels;

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

using Assignment = std::vector<std::pair<std::size_t, std::size_t>>; // (row, col)

inline double assignment_total(const SimilarityMatrix& sim, const Assignment& assignment) {
    double total = 0.0;
    for (const auto& [r, c] : assignment) total += sim.at(r, c);
    return total;
}

struct AlignedPair {
    std::string query_id;
    HypotheticalTool ht;
    std::string gold_tool_id;
    double similarity = 0.0;
    std::string method;

    json to_json() const {
        return json{{"query_id", query_id},
                    {"ht", ht.to_json()},
                    {"gold_tool_id", gold_tool_id},
                    {"similarity", similarity},
                    {"method", method}};
    }

    static AlignedPair from_json(const json& j) {
        AlignedPair p;
        p.query_id = j.at("query_id").get<std::string>();
        p.ht = HypotheticalTool::from_json(j.at("ht"));
        p.gold_tool_id = j.at("gold_tool_id").get<std::string>();
        p.similarity = j.at("similarity").get<double>();
        p.method = j.value("method", std::string("hungarian"));
        return p;
    }
};

inline SimilarityMatrix similarity_matrix(const std::vector<HypotheticalTool>& hts,
                                          const std::vector<Tool>& golds,
                                          const EmbeddingProvider& provider) {
    if (hts.empty() || golds.empty()) throw data_error("similarity matrix needs non-empty tool lists");
    std::vector<std::string> texts;
    texts.reserve(hts.size() + golds.size());
    for (const auto& ht : hts) texts.push_back(tnd_text(ht));
    for (const auto& gold : golds) texts.push_back(gold.embed_text());
    auto vectors = provider.embed_batch(texts);

    SimilarityMatrix sim;
    sim.rows = hts.size();
    sim.cols = golds.size();
    sim.values.resize(sim.rows * sim.cols);
    for (const auto& gold : golds) sim.col_labels.push_back(gold.id);
    for (std::size_t r = 0; r < sim.rows; ++r) {
        for (std::size_t c = 0; c < sim.cols; ++c) {
            sim.at(r, c) = cosine_similarity(vectors[r], vectors[hts.size() + c]);
        }
    }
    return sim;
}

namespace detail {

/// Jonker-Volgenant style shortest augmenting path for the square assignment
/// problem, minimizing cost. Returns col index per row.
inline std::vector<std::size_t> solve_min_cost(const std::vector<double>& cost, std::size_t n) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    // 1-based potentials; way[j] remembers the augmenting predecessor.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            std::size_t i0 = p[j0], j1 = 0;
            double delta = kInf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= n; ++j) {
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

/// Maximum attainable similarity total on a sub-problem given the remaining
/// row ordinals and free columns.
inline double best_completion(const SimilarityMatrix& sim, const std::vector<std::size_t>& rows,
                              const std::vector<std::size_t>& cols) {
    std::size_t m = rows.size();
    if (m == 0) return 0.0;
    std::vector<double> cost(m * m);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < m; ++c) cost[r * m + c] = -sim.at(rows[r], cols[c]);
    }
    auto assignment = solve_min_cost(cost, m);
    double total = 0.0;
    for (std::size_t r = 0; r < m; ++r) total += sim.at(rows[r], cols[assignment[r]]);
    return total;
}

} // namespace detail

/// Optimal 1:1 assignment maximizing total similarity. Among all optima the
/// lexicographically smallest (row, col) sequence is returned: each row in
/// turn takes the smallest column that still admits an optimal completion.
inline Assignment hungarian_match_square(const SimilarityMatrix& sim) {
    std::size_t n = sim.rows;
    std::vector<std::size_t> all_rows(n), free_cols(n);
    for (std::size_t i = 0; i < n; ++i) {
        all_rows[i] = i;
        free_cols[i] = i;
    }
    double best_total = detail::best_completion(sim, all_rows, free_cols);
    const double tol = 1e-9;

    Assignment result;
    double partial = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<std::size_t> rest_rows;
        for (std::size_t rr = r + 1; rr < n; ++rr) rest_rows.push_back(rr);
        bool fixed = false;
        for (std::size_t ci = 0; ci < free_cols.size() && !fixed; ++ci) {
            std::size_t c = free_cols[ci];
            std::vector<std::size_t> rest_cols = free_cols;
            rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(ci));
            double completion = detail::best_completion(sim, rest_rows, rest_cols);
            if (partial + sim.at(r, c) + completion >= best_total - tol) {
                result.emplace_back(r, c);
                partial += sim.at(r, c);
                free_cols = std::move(rest_cols);
                fixed = true;
            }
        }
        if (!fixed) throw data_error("assignment search failed to complete (non-finite similarities?)");
    }
    return result;
}

/// Rectangular inputs are padded to square with a similarity below the cosine
/// floor; padded assignments are dropped from the result.
inline Assignment hungarian_match(const SimilarityMatrix& sim) {
    if (sim.rows == 0 || sim.cols == 0) throw data_error("cannot match an empty similarity matrix");
    if (sim.rows == sim.cols) return hungarian_match_square(sim);

    std::size_t n = std::max(sim.rows, sim.cols);
    SimilarityMatrix padded;
    padded.rows = padded.cols = n;
    padded.values.assign(n * n, -2.0);
    for (std::size_t r = 0; r < sim.rows; ++r) {
        for (std::size_t c = 0; c < sim.cols; ++c) padded.at(r, c) = sim.at(r, c);
    }
    Assignment full = hungarian_match_square(padded);
    Assignment trimmed;
    for (const auto& [r, c] : full) {
        if (r < sim.rows && c < sim.cols) trimmed.emplace_back(r, c);
    }
    return trimmed;
}

/// Iteratively picks the globally largest remaining entry (ties by smallest
/// (row, col)), removing its row and column. The weak-alignment ablation.
inline Assignment greedy_match(const SimilarityMatrix& sim) {
    if (sim.rows == 0 || sim.cols == 0) throw data_error("cannot match an empty similarity matrix");
    std::size_t n = std::min(sim.rows, sim.cols);
    std::vector<bool> row_used(sim.rows, false), col_used(sim.cols, false);
    Assignment result;
    for (std::size_t step = 0; step < n; ++step) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_r = 0, best_c = 0;
        for (std::size_t r = 0; r < sim.rows; ++r) {
            if (row_used[r]) continue;
            for (std::size_t c = 0; c < sim.cols; ++c) {
                if (col_used[c]) continue;
                if (sim.at(r, c) > best) {
                    best = sim.at(r, c);
                    best_r = r;
                    best_c = c;
                }
            }
        }
        row_used[best_r] = true;
        col_used[best_c] = true;
        result.emplace_back(best_r, best_c);
    }
    std::sort(result.begin(), result.end());
    return result;
}

enum class AlignMethod { hungarian, greedy };

inline std::string to_string(AlignMethod m) { return m == AlignMethod::hungarian ? "hungarian" : "greedy"; }

inline AlignMethod align_method_from_string(const std::string& s) {
    if (s == "hungarian") return AlignMethod::hungarian;
    if (s == "greedy") return AlignMethod::greedy;
    throw usage_error("unknown alignment method: " + s);
}

/// Aligns a usable train-mode record's hypothetical tools 1:1 with the
/// query's gold tools. Gold columns are ordered by tool id.
inline std::vector<AlignedPair> align(const Query& query, const GenerationRecord& record,
                                      const ToolCollection& tools, const EmbeddingProvider& provider,
                                      AlignMethod method) {
    if (record.status != GenStatus::ok) {
        throw data_error("cannot align query " + query.id + ": generation status is not ok");
    }
    std::vector<Tool> golds;
    for (const auto& id : query.gold_tool_ids) golds.push_back(tools.at(id));

    SimilarityMatrix sim = similarity_matrix(record.tools, golds, provider);
    Assignment assignment = (method == AlignMethod::hungarian) ? hungarian_match(sim) : greedy_match(sim);

    std::vector<AlignedPair> pairs;
    for (const auto& [r, c] : assignment) {
        AlignedPair pair;
        pair.query_id = query.id;
        pair.ht = record.tools[r];
        pair.gold_tool_id = sim.col_labels[c];
        pair.similarity = sim.at(r, c);
        pair.method = to_string(method);
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

} // namespace tooldreamer
