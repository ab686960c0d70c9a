#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "tooldreamer/errors.hpp"
#include "tooldreamer/jsonl.hpp"
#include "tooldreamer/util.hpp"

namespace tooldreamer {

enum class Split { web, code, customized, other };

inline std::string to_string(Split split) {
    switch (split) {
        case Split::web: return "web";
        case Split::code: return "code";
        case Split::customized: return "customized";
        case Split::other: return "other";
    }
    return "other";
}

/// Unknown split labels fold into `other` rather than failing the load.
inline Split split_from_string(const std::string& s) {
    if (s == "web") return Split::web;
    if (s == "code") return Split::code;
    if (s == "customized") return Split::customized;
    return Split::other;
}

struct Tool {
    std::string id;
    std::string name;
    std::string description;
    Split split = Split::other;

    /// The text a tool contributes to dense embedding and alignment.
    std::string embed_text() const { return name + ": " + description; }

    json to_json() const {
        return json{{"id", id}, {"name", name}, {"description", description}, {"split", to_string(split)}};
    }
};

struct Query {
    std::string id;
    std::string text;
    std::vector<std::string> gold_tool_ids;     // sorted, unique
    std::vector<std::string> negative_tool_ids; // sorted, unique
    Split split = Split::other;

    json to_json() const {
        return json{{"id", id},
                    {"text", text},
                    {"gold", gold_tool_ids},
                    {"negative", negative_tool_ids},
                    {"split", to_string(split)}};
    }
};

/// Tools sorted by id; lookups are binary searches.
class ToolCollection {
public:
    ToolCollection() = default;

    explicit ToolCollection(std::vector<Tool> tools) : tools_(std::move(tools)) {
        std::sort(tools_.begin(), tools_.end(), [](const Tool& a, const Tool& b) { return a.id < b.id; });
    }

    const std::vector<Tool>& items() const { return tools_; }
    std::size_t size() const { return tools_.size(); }
    bool empty() const { return tools_.empty(); }

    const Tool* find(const std::string& id) const {
        auto it = std::lower_bound(tools_.begin(), tools_.end(), id,
                                   [](const Tool& t, const std::string& key) { return t.id < key; });
        if (it == tools_.end() || it->id != id) return nullptr;
        return &*it;
    }

    const Tool& at(const std::string& id) const {
        const Tool* tool = find(id);
        if (!tool) throw data_error("unknown tool id: " + id);
        return *tool;
    }

private:
    std::vector<Tool> tools_;
};

/// Queries in load (file) order; filtration relies on it for first-occurrence
/// duplicate handling and re-sorts its output by id.
class QueryCollection {
public:
    QueryCollection() = default;
    explicit QueryCollection(std::vector<Query> queries) : queries_(std::move(queries)) {}

    const std::vector<Query>& items() const { return queries_; }
    std::size_t size() const { return queries_.size(); }
    bool empty() const { return queries_.empty(); }

    const Query* find(const std::string& id) const {
        for (const auto& q : queries_) {
            if (q.id == id) return &q;
        }
        return nullptr;
    }

    const Query& at(const std::string& id) const {
        const Query* query = find(id);
        if (!query) throw data_error("unknown query id: " + id);
        return *query;
    }

    void sort_by_id() {
        std::sort(queries_.begin(), queries_.end(), [](const Query& a, const Query& b) { return a.id < b.id; });
    }

private:
    std::vector<Query> queries_;
};

struct FiltrationReport {
    std::size_t tools_removed = 0;
    std::size_t queries_removed = 0;
    std::map<std::string, std::size_t> reasons;

    json to_json() const {
        json r;
        r["tools_removed"] = tools_removed;
        r["queries_removed"] = queries_removed;
        json reason_obj = json::object();
        for (const auto& [code, count] : reasons) reason_obj[code] = count;
        r["reasons"] = reason_obj;
        return r;
    }

    bool operator==(const FiltrationReport& other) const {
        return tools_removed == other.tools_removed && queries_removed == other.queries_removed &&
               reasons == other.reasons;
    }
};

namespace detail {

inline std::string require_string(const json& record, const char* field, const std::filesystem::path& path,
                                  std::size_t line) {
    if (!record.contains(field) || !record[field].is_string()) {
        throw data_error(path.string() + ":" + std::to_string(line) + ": missing or non-string field \"" +
                         field + "\"");
    }
    return record[field].get<std::string>();
}

inline std::vector<std::string> sorted_unique(std::vector<std::string> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

} // namespace detail

/// Tools JSONL: {"id", "name", "description", "split"} per line.
inline ToolCollection load_tools(const std::filesystem::path& path) {
    std::vector<Tool> tools;
    std::map<std::string, std::size_t> seen; // id -> first line
    for (const auto& [line, record] : read_jsonl(path)) {
        Tool tool;
        tool.id = detail::require_string(record, "id", path, line);
        tool.name = detail::require_string(record, "name", path, line);
        tool.description = detail::require_string(record, "description", path, line);
        tool.split = split_from_string(record.value("split", std::string("other")));
        if (tool.id.empty()) throw data_error(path.string() + ":" + std::to_string(line) + ": empty tool id");
        if (tool.name.empty()) throw data_error(path.string() + ":" + std::to_string(line) + ": empty tool name");
        auto [it, inserted] = seen.emplace(tool.id, line);
        if (!inserted) {
            throw data_error(path.string() + ":" + std::to_string(line) + ": duplicate id \"" + tool.id + "\"");
        }
        tools.push_back(std::move(tool));
    }
    return ToolCollection(std::move(tools));
}

/// Queries JSONL: {"id", "text", "gold": [...], "negative": [...], "split"}.
inline QueryCollection load_queries(const std::filesystem::path& path) {
    std::vector<Query> queries;
    std::map<std::string, std::size_t> seen;
    for (const auto& [line, record] : read_jsonl(path)) {
        Query query;
        query.id = detail::require_string(record, "id", path, line);
        query.text = detail::require_string(record, "text", path, line);
        if (query.id.empty()) throw data_error(path.string() + ":" + std::to_string(line) + ": empty query id");
        if (trim(query.text).empty()) {
            throw data_error(path.string() + ":" + std::to_string(line) + ": empty query text");
        }
        if (!record.contains("gold") || !record["gold"].is_array() || record["gold"].empty()) {
            throw data_error(path.string() + ":" + std::to_string(line) + ": \"gold\" must be a non-empty array");
        }
        query.gold_tool_ids = detail::sorted_unique(record["gold"].get<std::vector<std::string>>());
        if (record.contains("negative")) {
            if (!record["negative"].is_array()) {
                throw data_error(path.string() + ":" + std::to_string(line) + ": \"negative\" must be an array");
            }
            query.negative_tool_ids = detail::sorted_unique(record["negative"].get<std::vector<std::string>>());
        }
        query.split = split_from_string(record.value("split", std::string("other")));
        auto [it, inserted] = seen.emplace(query.id, line);
        if (!inserted) {
            throw data_error(path.string() + ":" + std::to_string(line) + ": duplicate id \"" + query.id + "\"");
        }
        queries.push_back(std::move(query));
    }
    return QueryCollection(std::move(queries));
}

inline std::pair<ToolCollection, QueryCollection> load_corpus(const std::filesystem::path& tools_path,
                                                              const std::filesystem::path& queries_path) {
    return {load_tools(tools_path), load_queries(queries_path)};
}

/// Removes: tools with empty/whitespace-only descriptions; queries referencing
/// removed or missing tools; duplicate query texts (first occurrence kept);
/// queries left without negatives once gold/negative overlap is trimmed.
/// A query can trip several rules; it is removed once but every tripped
/// reason is counted.
inline std::tuple<ToolCollection, QueryCollection, FiltrationReport>
filter_dataset(const ToolCollection& tools, const QueryCollection& queries) {
    FiltrationReport report;

    std::vector<Tool> kept_tools;
    std::set<std::string> kept_ids;
    for (const auto& tool : tools.items()) {
        if (trim(tool.description).empty()) {
            ++report.tools_removed;
            ++report.reasons["empty_description"];
            continue;
        }
        kept_tools.push_back(tool);
        kept_ids.insert(tool.id);
    }

    std::vector<Query> kept_queries;
    std::set<std::string> seen_texts;
    for (const auto& query : queries.items()) {
        bool removed = false;

        bool duplicate = !seen_texts.insert(trim(query.text)).second;
        if (duplicate) {
            ++report.reasons["duplicate_query"];
            removed = true;
        }

        bool dangling = false;
        for (const auto& id : query.gold_tool_ids) {
            if (!kept_ids.count(id)) { dangling = true; break; }
        }
        if (!dangling) {
            for (const auto& id : query.negative_tool_ids) {
                if (!kept_ids.count(id)) { dangling = true; break; }
            }
        }
        if (dangling) {
            ++report.reasons["dangling_reference"];
            removed = true;
        }

        // Negatives that also appear as golds are dropped from the negative
        // set; a query that ends up with no negatives is removed.
        Query trimmed = query;
        std::vector<std::string> negatives;
        for (const auto& id : trimmed.negative_tool_ids) {
            if (!std::binary_search(trimmed.gold_tool_ids.begin(), trimmed.gold_tool_ids.end(), id)) {
                negatives.push_back(id);
            }
        }
        trimmed.negative_tool_ids = std::move(negatives);
        if (trimmed.negative_tool_ids.empty()) {
            ++report.reasons["zero_negatives"];
            removed = true;
        }

        if (removed) {
            ++report.queries_removed;
            continue;
        }
        kept_queries.push_back(std::move(trimmed));
    }

    QueryCollection out_queries(std::move(kept_queries));
    out_queries.sort_by_id();
    return {ToolCollection(std::move(kept_tools)), std::move(out_queries), report};
}

/// Uniform sample of n queries without replacement; deterministic for a fixed
/// seed and returned sorted by query id. The draw is a partial Fisher-Yates
/// over the id-sorted collection using mt19937_64(seed).
inline QueryCollection sample_training(const QueryCollection& queries, std::size_t n, std::uint64_t seed) {
    if (n > queries.size()) {
        throw data_error("sample size " + std::to_string(n) + " exceeds query count " +
                         std::to_string(queries.size()));
    }
    std::vector<Query> pool = queries.items();
    std::sort(pool.begin(), pool.end(), [](const Query& a, const Query& b) { return a.id < b.id; });

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen = sample_indices(pool.size(), n, rng);

    std::vector<Query> sampled;
    sampled.reserve(n);
    for (std::size_t idx : chosen) sampled.push_back(pool[idx]);
    QueryCollection out(std::move(sampled));
    out.sort_by_id();
    return out;
}

inline void save_tools(const std::filesystem::path& path, const ToolCollection& tools) {
    std::vector<json> records;
    records.reserve(tools.size());
    for (const auto& tool : tools.items()) records.push_back(tool.to_json());
    write_jsonl(path, records);
}

inline void save_queries(const std::filesystem::path& path, const QueryCollection& queries) {
    std::vector<json> records;
    records.reserve(queries.size());
    for (const auto& query : queries.items()) records.push_back(query.to_json());
    write_jsonl(path, records);
}

} // namespace tooldreamer
