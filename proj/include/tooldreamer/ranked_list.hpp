#pragma once

#include <string>
#include <vector>

#include "tooldreamer/jsonl.hpp"

namespace tooldreamer {

struct RankedItem {
    std::string tool_id;
    double score = 0.0;
};

/// One ordered result list: either the output of a single search vector
/// (source_tag identifies which) or a fused list (source_tag "fused").
struct RankedList {
    std::string query_id;
    std::string source_tag;
    std::vector<RankedItem> items;

    json to_json() const {
        json arr = json::array();
        for (const auto& item : items) arr.push_back(json{{"tool_id", item.tool_id}, {"score", item.score}});
        return json{{"query_id", query_id}, {"source_tag", source_tag}, {"items", arr}};
    }

    static RankedList from_json(const json& j) {
        RankedList list;
        list.query_id = j.at("query_id").get<std::string>();
        list.source_tag = j.at("source_tag").get<std::string>();
        for (const auto& item : j.at("items")) {
            list.items.push_back({item.at("tool_id").get<std::string>(), item.at("score").get<double>()});
        }
        return list;
    }
};

} // namespace tooldreamer
