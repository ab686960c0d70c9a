#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tooldreamer/corpus.hpp"
#include "tooldreamer/errors.hpp"
#include "tooldreamer/ranked_list.hpp"

namespace tooldreamer {

/// |top-k intersect gold| / k. The denominator stays k even when fewer items
/// were returned.
inline double precision_at_k(const RankedList& ranked, const std::set<std::string>& gold, std::size_t k) {
    if (k == 0) throw usage_error("k must be at least 1");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranked.items.size()); ++i) {
        if (gold.count(ranked.items[i].tool_id)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

/// |top-k intersect gold| / |gold|.
inline double recall_at_k(const RankedList& ranked, const std::set<std::string>& gold, std::size_t k) {
    if (gold.empty()) throw data_error("recall undefined for an empty gold set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranked.items.size()); ++i) {
        if (gold.count(ranked.items[i].tool_id)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

/// Reciprocal rank of the first gold item over the full returned list; 0 when
/// no gold appears.
inline double mrr(const RankedList& ranked, const std::set<std::string>& gold) {
    for (std::size_t i = 0; i < ranked.items.size(); ++i) {
        if (gold.count(ranked.items[i].tool_id)) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

/// Binary-relevance NDCG with the 1/log2(i+1) discount.
/// DCG = sum_{i<=k, d_i in gold} 1/log2(i+1); IDCG over min(|gold|, k) ideal slots.
inline double ndcg_at_k(const RankedList& ranked, const std::set<std::string>& gold, std::size_t k) {
    if (gold.empty()) throw data_error("NDCG undefined for an empty gold set");
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranked.items.size()); ++i) {
        if (gold.count(ranked.items[i].tool_id)) dcg += 1.0 / std::log2(static_cast<double>(i + 2));
    }
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(gold.size(), k); ++i) {
        idcg += 1.0 / std::log2(static_cast<double>(i + 2));
    }
    return dcg / idcg;
}

struct SplitMetrics {
    double ndcg = 0.0; // percent
    double p = 0.0;
    double r = 0.0;
    double mrr = 0.0;
    std::size_t query_count = 0;

    json to_json() const {
        return json{{"ndcg_at_k", ndcg}, {"p_at_k", p}, {"r_at_k", r}, {"mrr", mrr},
                    {"query_count", query_count}};
    }
};

struct EvalReport {
    std::size_t k = 10;
    std::map<std::string, SplitMetrics> per_split;
    SplitMetrics avg_macro; // simple mean over splits (headline, table layout convention)
    SplitMetrics avg_micro; // query-weighted mean
    json metadata;

    json to_json() const {
        json splits = json::object();
        for (const auto& [name, m] : per_split) splits[name] = m.to_json();
        return json{{"k", k},
                    {"splits", splits},
                    {"avg_macro", avg_macro.to_json()},
                    {"avg_micro", avg_micro.to_json()},
                    {"metadata", metadata}};
    }
};

namespace detail {

inline double round2(double percent) { return std::round(percent * 100.0) / 100.0; }

} // namespace detail

/// Per-query metrics on the top-k of each fused list, averaged per split and
/// overall. Values are percentages rounded to 2 decimals. Lists must reference
/// known queries; an empty run is an error, not a zero report.
inline EvalReport evaluate_run(const std::vector<RankedList>& run, const QueryCollection& queries,
                               std::size_t k, json metadata = json::object()) {
    if (run.empty()) throw data_error("cannot evaluate an empty run");

    struct Accumulator {
        double ndcg = 0.0, p = 0.0, r = 0.0, mrr_sum = 0.0;
        std::size_t count = 0;
    };
    std::map<std::string, Accumulator> by_split;
    Accumulator overall;

    for (const auto& list : run) {
        const Query* query = queries.find(list.query_id);
        if (!query) throw data_error("run references unknown query id: " + list.query_id);
        std::set<std::string> gold(query->gold_tool_ids.begin(), query->gold_tool_ids.end());

        double n = ndcg_at_k(list, gold, k);
        double p = precision_at_k(list, gold, k);
        double r = recall_at_k(list, gold, k);
        double m = mrr(list, gold);

        auto& acc = by_split[to_string(query->split)];
        acc.ndcg += n;
        acc.p += p;
        acc.r += r;
        acc.mrr_sum += m;
        ++acc.count;
        overall.ndcg += n;
        overall.p += p;
        overall.r += r;
        overall.mrr_sum += m;
        ++overall.count;
    }

    EvalReport report;
    report.k = k;
    report.metadata = std::move(metadata);

    double macro_n = 0.0, macro_p = 0.0, macro_r = 0.0, macro_m = 0.0;
    for (const auto& [split, acc] : by_split) {
        SplitMetrics m;
        double c = static_cast<double>(acc.count);
        m.ndcg = detail::round2(100.0 * acc.ndcg / c);
        m.p = detail::round2(100.0 * acc.p / c);
        m.r = detail::round2(100.0 * acc.r / c);
        m.mrr = detail::round2(100.0 * acc.mrr_sum / c);
        m.query_count = acc.count;
        report.per_split[split] = m;
        macro_n += acc.ndcg / c;
        macro_p += acc.p / c;
        macro_r += acc.r / c;
        macro_m += acc.mrr_sum / c;
    }
    double splits = static_cast<double>(by_split.size());
    report.avg_macro.ndcg = detail::round2(100.0 * macro_n / splits);
    report.avg_macro.p = detail::round2(100.0 * macro_p / splits);
    report.avg_macro.r = detail::round2(100.0 * macro_r / splits);
    report.avg_macro.mrr = detail::round2(100.0 * macro_m / splits);
    report.avg_macro.query_count = overall.count;

    double total = static_cast<double>(overall.count);
    report.avg_micro.ndcg = detail::round2(100.0 * overall.ndcg / total);
    report.avg_micro.p = detail::round2(100.0 * overall.p / total);
    report.avg_micro.r = detail::round2(100.0 * overall.r / total);
    report.avg_micro.mrr = detail::round2(100.0 * overall.mrr_sum / total);
    report.avg_micro.query_count = overall.count;
    return report;
}

/// Plain-text table: one metric block per split in fixed order, then the
/// macro average column.
inline std::string format_report_table(const EvalReport& report, const std::string& label) {
    const std::vector<std::string> split_order = {"web", "code", "customized", "other"};
    std::vector<std::pair<std::string, SplitMetrics>> columns;
    for (const auto& name : split_order) {
        auto it = report.per_split.find(name);
        if (it != report.per_split.end()) columns.emplace_back(name, it->second);
    }
    columns.emplace_back("Avg.", report.avg_macro);

    auto pad = [](const std::string& s, std::size_t width) {
        std::string out = s;
        while (out.size() < width) out = " " + out;
        return out;
    };

    const std::size_t label_width = std::max<std::size_t>(label.size(), 12);
    std::string header1 = pad("", label_width) + " |";
    std::string header2 = pad("Run", label_width) + " |";
    std::string row = pad(label, label_width) + " |";
    for (const auto& [name, m] : columns) {
        std::string cell_name = name;
        cell_name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(cell_name[0])));
        header1 += pad(cell_name, 27) + " |";
        header2 += pad("N@" + std::to_string(report.k), 7) + pad("P@" + std::to_string(report.k), 7) +
                   pad("R@" + std::to_string(report.k), 7) + pad("MRR", 6) + " |";
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%7.2f%7.2f%7.2f%6.2f", m.ndcg, m.p, m.r, m.mrr);
        row += std::string(buf) + " |";
    }
    return header1 + "\n" + header2 + "\n" + row + "\n";
}

} // namespace tooldreamer
