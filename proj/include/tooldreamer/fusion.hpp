#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tooldreamer/corpus.hpp"
#include "tooldreamer/errors.hpp"
#include "tooldreamer/hypothesizer.hpp"
#include "tooldreamer/ranked_list.hpp"

namespace tooldreamer {

/// Reciprocal Rank Fusion: fused(d) = sum over lists containing d of
/// 1/(k_const + rank), ranks starting at 1. Sorted descending, ties by
/// ascending tool id, truncated to top_k.
inline RankedList rrf(const std::vector<RankedList>& lists, double k_const, std::size_t top_k) {
    if (lists.empty()) throw data_error("RRF needs at least one input list");
    const std::string& query_id = lists[0].query_id;
    for (const auto& list : lists) {
        if (list.query_id != query_id) {
            throw data_error("RRF inputs mix query ids: " + query_id + " vs " + list.query_id);
        }
    }

    std::map<std::string, double> scores;
    for (const auto& list : lists) {
        for (std::size_t rank = 0; rank < list.items.size(); ++rank) {
            scores[list.items[rank].tool_id] += 1.0 / (k_const + static_cast<double>(rank + 1));
        }
    }

    std::vector<RankedItem> fused;
    fused.reserve(scores.size());
    for (const auto& [tool_id, score] : scores) fused.push_back({tool_id, score});
    std::sort(fused.begin(), fused.end(), [](const RankedItem& a, const RankedItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tool_id < b.tool_id;
    });
    if (fused.size() > top_k) fused.resize(top_k);

    RankedList result;
    result.query_id = query_id;
    result.source_tag = "fused";
    result.items = std::move(fused);
    return result;
}

struct LlmFuseResult {
    RankedList list;
    bool fell_back = false; // provider failure; RRF result returned instead
    std::string warning;
};

/// LLM-ranked fusion over the union of candidates, with guards: parsed names
/// outside the candidate set are dropped, over-reported lists are truncated
/// to top_k, and under-reported lists are backfilled from the RRF order.
/// Scores are clamped to be non-increasing down the list. Provider failures
/// fall back to plain RRF with a warning.
inline LlmFuseResult llm_fuse(const Query& query, const std::vector<RankedList>& lists,
                              const ToolCollection& tools, LlmProvider& provider, const PromptSet& prompts,
                              double k_const, std::size_t top_k) {
    LlmFuseResult result;
    RankedList rrf_order = rrf(lists, k_const, std::max(top_k, std::size_t{1000}));

    // Candidate set: union of everything retrieved, in RRF order.
    std::vector<std::string> candidate_ids;
    std::set<std::string> candidate_set;
    std::map<std::string, std::string> name_to_id; // first candidate wins a shared name
    for (const auto& item : rrf_order.items) {
        candidate_ids.push_back(item.tool_id);
        candidate_set.insert(item.tool_id);
        const Tool* tool = tools.find(item.tool_id);
        if (tool && !name_to_id.count(tool->name)) name_to_id[tool->name] = tool->id;
    }

    std::string candidate_block;
    for (const auto& id : candidate_ids) {
        const Tool& tool = tools.at(id);
        candidate_block += "Tool Name: " + tool.name + "\nTool Description: " + tool.description + "\n\n";
    }
    std::string prompt = detail::replace_all(prompts.fusion, "{{query}}", query.text);
    prompt = detail::replace_all(prompt, "{{candidates}}", candidate_block);

    std::string raw;
    try {
        raw = provider.complete(query.id, prompt);
    } catch (const Error& e) {
        result.fell_back = true;
        result.warning = std::string("LLM fusion provider failed, fell back to RRF: ") + e.what();
        result.list = rrf(lists, k_const, top_k);
        return result;
    }

    // Parse repeated "Tool:" / "Score:" blocks.
    std::vector<std::pair<std::string, double>> parsed;
    std::string pending_tool;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        std::size_t end = raw.find('\n', pos);
        std::string line = raw.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        pos = (end == std::string::npos) ? raw.size() + 1 : end + 1;
        std::string value;
        if (detail::match_marker(line, "tool", value)) {
            pending_tool = trim(value);
        } else if (detail::match_marker(line, "score", value) && !pending_tool.empty()) {
            try {
                parsed.emplace_back(pending_tool, std::stod(trim(value)));
            } catch (const std::exception&) {
                // unparseable score: skip the block
            }
            pending_tool.clear();
        }
    }

    RankedList fused;
    fused.query_id = query.id;
    fused.source_tag = "fused";
    std::set<std::string> taken;
    double prev_score = std::numeric_limits<double>::infinity();
    auto push = [&](const std::string& tool_id, double score) {
        score = std::min(score, prev_score);
        prev_score = score;
        fused.items.push_back({tool_id, score});
        taken.insert(tool_id);
    };

    for (const auto& [name, score] : parsed) {
        if (fused.items.size() >= top_k) break; // over-reported: keep the top_k first
        std::string tool_id;
        if (auto it = name_to_id.find(name); it != name_to_id.end()) {
            tool_id = it->second;
        } else if (candidate_set.count(name)) {
            tool_id = name; // fixture responses may use raw ids
        } else {
            continue; // hallucinated: not in the candidate set
        }
        if (taken.count(tool_id)) continue;
        push(tool_id, score);
    }

    // Under-reported: backfill from the RRF order.
    for (const auto& item : rrf_order.items) {
        if (fused.items.size() >= top_k) break;
        if (taken.count(item.tool_id)) continue;
        push(item.tool_id, item.score);
    }

    result.list = std::move(fused);
    return result;
}

} // namespace tooldreamer
