#pragma once

#include <cctype>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tooldreamer/corpus.hpp"
#include "tooldreamer/errors.hpp"
#include "tooldreamer/jsonl.hpp"
#include "tooldreamer/util.hpp"

namespace tooldreamer {

struct HypotheticalTool {
    std::string thought;
    std::string name;
    std::string description;

    json to_json() const {
        return json{{"thought", thought}, {"name", name}, {"description", description}};
    }

    static HypotheticalTool from_json(const json& j) {
        return {j.at("thought").get<std::string>(), j.at("name").get<std::string>(),
                j.at("description").get<std::string>()};
    }
};

enum class GenMode { train, test, inferior };

inline std::string to_string(GenMode mode) {
    switch (mode) {
        case GenMode::train: return "train";
        case GenMode::test: return "test";
        case GenMode::inferior: return "inferior";
    }
    return "test";
}

inline GenMode gen_mode_from_string(const std::string& s) {
    if (s == "train") return GenMode::train;
    if (s == "test") return GenMode::test;
    if (s == "inferior") return GenMode::inferior;
    throw usage_error("unknown generation mode: " + s);
}

enum class GenStatus { ok, count_mismatch, parse_failure };

inline std::string to_string(GenStatus status) {
    switch (status) {
        case GenStatus::ok: return "ok";
        case GenStatus::count_mismatch: return "count_mismatch";
        case GenStatus::parse_failure: return "parse_failure";
    }
    return "parse_failure";
}

struct GenerationRecord {
    std::string query_id;
    GenMode mode = GenMode::test;
    std::size_t n_required = 0; // meaningful in train mode only
    std::vector<HypotheticalTool> tools;
    std::string raw_text;
    GenStatus status = GenStatus::parse_failure;

    json to_json() const {
        json tools_json = json::array();
        for (const auto& t : tools) tools_json.push_back(t.to_json());
        json j{{"query_id", query_id},
               {"mode", to_string(mode)},
               {"status", to_string(status)},
               {"tools", tools_json},
               {"raw_text", raw_text}};
        if (mode == GenMode::train) j["n_required"] = n_required;
        return j;
    }

    static GenerationRecord from_json(const json& j) {
        GenerationRecord r;
        r.query_id = j.at("query_id").get<std::string>();
        r.mode = gen_mode_from_string(j.at("mode").get<std::string>());
        r.n_required = j.value("n_required", std::size_t{0});
        std::string status = j.at("status").get<std::string>();
        if (status == "ok") r.status = GenStatus::ok;
        else if (status == "count_mismatch") r.status = GenStatus::count_mismatch;
        else r.status = GenStatus::parse_failure;
        for (const auto& t : j.at("tools")) r.tools.push_back(HypotheticalTool::from_json(t));
        r.raw_text = j.at("raw_text").get<std::string>();
        return r;
    }
};

enum class VectorStyle { Q, TND, QTND };

inline std::string to_string(VectorStyle style) {
    switch (style) {
        case VectorStyle::Q: return "Q";
        case VectorStyle::TND: return "TND";
        case VectorStyle::QTND: return "QTND";
    }
    return "Q";
}

inline VectorStyle vector_style_from_string(const std::string& s) {
    if (s == "Q") return VectorStyle::Q;
    if (s == "TND") return VectorStyle::TND;
    if (s == "QTND") return VectorStyle::QTND;
    throw usage_error("unknown search vector style: " + s);
}

struct SearchVector {
    std::string query_id;
    VectorStyle style = VectorStyle::Q;
    std::string text;
    enum class Source { hypothetical, fallback_question } source = Source::fallback_question;
};

/// Search-vector renderings. The three fields are joined by single spaces
/// with no space after the colons; QTND prepends the labelled question.
inline std::string tnd_text(const HypotheticalTool& ht) {
    return "Thoughts:" + ht.thought + " Tool Name:" + ht.name + " Tool Description:" + ht.description;
}

inline std::string qtnd_text(const std::string& query_text, const HypotheticalTool& ht) {
    return "Question:" + query_text + " " + tnd_text(ht);
}

/// Prompt templates are versioned resource files; nothing is inlined in code.
/// Placeholders: {{query}}, {{n_tools}}, {{candidates}}.
struct PromptSet {
    std::string train;
    std::string test;
    std::string inferior;
    std::string fusion;

    static PromptSet load(const std::filesystem::path& dir) {
        PromptSet p;
        p.train = read_text_file(dir / "ht_train.txt");
        p.test = read_text_file(dir / "ht_test.txt");
        p.inferior = read_text_file(dir / "ht_inferior.txt");
        p.fusion = read_text_file(dir / "llm_fusion.txt");
        return p;
    }
};

namespace detail {

inline std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

} // namespace detail

inline std::string render_prompt(const PromptSet& prompts, const Query& query, GenMode mode,
                                 std::size_t n_required = 0) {
    switch (mode) {
        case GenMode::train: {
            std::string out = detail::replace_all(prompts.train, "{{query}}", query.text);
            return detail::replace_all(out, "{{n_tools}}", std::to_string(n_required));
        }
        case GenMode::test:
            return detail::replace_all(prompts.test, "{{query}}", query.text);
        case GenMode::inferior:
            return detail::replace_all(prompts.inferior, "{{query}}", query.text);
    }
    throw usage_error("unreachable generation mode");
}

struct ParseCounts {
    std::size_t thoughts = 0;
    std::size_t names = 0;
    std::size_t descriptions = 0;
};

/// ParseFailure is a value: callers inspect ok/counts and decide the
/// fallback themselves.
struct ParseOutcome {
    bool ok = false;
    std::vector<HypotheticalTool> tools;
    ParseCounts counts;
};

namespace detail {

/// Matches a field marker at a line start: optional list marker, optional
/// bold markers, the field name (case-insensitive), then a colon. Returns the
/// value remainder when matched.
inline bool match_marker(const std::string& line, const char* field, std::string& value_out) {
    std::size_t i = 0;
    auto skip_ws = [&]() { while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i; };
    skip_ws();
    // list markers: "-", "*", "+", "1.", "2)"
    if (i < line.size() && (line[i] == '-' || line[i] == '*' || line[i] == '+')) {
        ++i;
        skip_ws();
    } else if (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
        std::size_t j = i;
        while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        if (j < line.size() && (line[j] == '.' || line[j] == ')')) {
            i = j + 1;
            skip_ws();
        }
    }
    while (i + 1 < line.size() && line[i] == '*' && line[i + 1] == '*') i += 2;
    skip_ws();

    std::size_t f = 0;
    std::size_t start = i;
    while (field[f] != '\0') {
        if (start >= line.size()) return false;
        char a = static_cast<char>(std::tolower(static_cast<unsigned char>(line[start])));
        char b = static_cast<char>(std::tolower(static_cast<unsigned char>(field[f])));
        if (a != b) return false;
        ++start;
        ++f;
    }
    i = start;
    // optional plural "s" on "thought"
    if (std::string_view(field) == "thought" && i < line.size() &&
        std::tolower(static_cast<unsigned char>(line[i])) == 's') {
        ++i;
    }
    while (i + 1 < line.size() && line[i] == '*' && line[i + 1] == '*') i += 2;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size() || line[i] != ':') return false;
    ++i;
    // "**Thought:** value" leaves the closing bold after the colon.
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i + 1 < line.size() && line[i] == '*' && line[i + 1] == '*') i += 2;
    value_out = line.substr(i);
    return true;
}

inline bool is_fence(const std::string& line) {
    std::string t = trim(line);
    return t.rfind("```", 0) == 0;
}

} // namespace detail

/// Scans for repeated Thought / Tool Name / Tool Description blocks.
/// Case-insensitive, tolerant of list markers, bold markers, and code fences.
/// Values continue until the next marker line. Tools are returned only when
/// the three field counts are equal and at least one; names and descriptions
/// must be non-empty.
inline ParseOutcome parse_generation(const std::string& raw_text) {
    ParseOutcome outcome;
    std::vector<std::string> thoughts, names, descriptions;

    std::vector<std::string>* active = nullptr;
    std::string accumulated;

    auto flush = [&]() {
        if (active) active->push_back(trim(accumulated));
        active = nullptr;
        accumulated.clear();
    };

    std::size_t pos = 0;
    while (pos <= raw_text.size()) {
        std::size_t end = raw_text.find('\n', pos);
        std::string line = raw_text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        pos = (end == std::string::npos) ? raw_text.size() + 1 : end + 1;

        if (detail::is_fence(line)) {
            flush();
            continue;
        }
        std::string value;
        if (detail::match_marker(line, "tool name", value)) {
            flush();
            active = &names;
            accumulated = value;
        } else if (detail::match_marker(line, "tool description", value)) {
            flush();
            active = &descriptions;
            accumulated = value;
        } else if (detail::match_marker(line, "thought", value)) {
            flush();
            active = &thoughts;
            accumulated = value;
        } else if (active) {
            accumulated += "\n" + line;
        }
    }
    flush();

    outcome.counts = {thoughts.size(), names.size(), descriptions.size()};
    bool counts_match = thoughts.size() == names.size() && names.size() == descriptions.size();
    if (!counts_match || names.empty()) return outcome;

    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i].empty() || descriptions[i].empty()) return outcome;
        outcome.tools.push_back({thoughts[i], names[i], descriptions[i]});
    }
    outcome.ok = true;
    return outcome;
}

/// Text-completion provider. `key` identifies the request (the query id) so
/// offline mocks can serve canned responses; HTTP implementations ignore it.
class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    virtual std::string complete(const std::string& key, const std::string& prompt) = 0;
};

using MockResponses = std::map<std::string, std::vector<std::string>>;

/// Replays canned responses from a fixtures file. Repeated calls for the same
/// key walk the response list and clamp at the last entry, so retry behavior
/// is scriptable.
class MockLlmProvider final : public LlmProvider {
public:
    explicit MockLlmProvider(MockResponses responses) : responses_(std::move(responses)) {}

    /// Fixture file: {"<key>": ["response", ...], ...} or a sectioned
    /// {"generation": {...}, "fusion": {...}} document; `section` picks one.
    static std::map<std::string, std::vector<std::string>>
    load_fixtures(const std::filesystem::path& path, const std::string& section) {
        json doc = json::parse(read_text_file(path));
        const json* table = &doc;
        if (doc.contains(section) && doc[section].is_object()) table = &doc[section];
        std::map<std::string, std::vector<std::string>> responses;
        for (const auto& [key, value] : table->items()) {
            if (value.is_string()) {
                responses[key] = {value.get<std::string>()};
            } else if (value.is_array()) {
                responses[key] = value.get<std::vector<std::string>>();
            }
        }
        return responses;
    }

    std::string complete(const std::string& key, const std::string&) override {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = responses_.find(key);
        if (it == responses_.end() || it->second.empty()) {
            throw provider_error("mock LLM has no response for key \"" + key + "\"");
        }
        std::size_t n = counters_[key]++;
        const auto& list = it->second;
        return list[std::min(n, list.size() - 1)];
    }

private:
    std::map<std::string, std::vector<std::string>> responses_;
    std::map<std::string, std::size_t> counters_;
    std::mutex mutex_;
};

/// Runs the generate-parse loop. Train mode demands exactly n_required tools
/// and retries up to `retries` extra attempts before reporting
/// count_mismatch (callers drop such queries from training). Test and
/// inferior modes accept any parseable count of at least one.
inline GenerationRecord generate(const Query& query, LlmProvider& provider, const PromptSet& prompts,
                                 GenMode mode, std::size_t retries) {
    std::size_t n_required = (mode == GenMode::train) ? query.gold_tool_ids.size() : 0;
    std::string prompt = render_prompt(prompts, query, mode, n_required);

    GenerationRecord record;
    record.query_id = query.id;
    record.mode = mode;
    record.n_required = n_required;

    std::size_t attempts = 1 + retries;
    for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
        record.raw_text = provider.complete(query.id, prompt);
        ParseOutcome parsed = parse_generation(record.raw_text);

        if (!parsed.ok) {
            record.status = GenStatus::parse_failure;
            record.tools.clear();
            continue;
        }
        // Outside inferior mode every tool needs a non-empty thought.
        if (mode != GenMode::inferior) {
            bool missing_thought = false;
            for (const auto& t : parsed.tools) {
                if (t.thought.empty()) { missing_thought = true; break; }
            }
            if (missing_thought) {
                record.status = GenStatus::parse_failure;
                record.tools.clear();
                continue;
            }
        }
        if (mode == GenMode::train && parsed.tools.size() != n_required) {
            record.status = GenStatus::count_mismatch;
            record.tools.clear();
            continue;
        }
        record.status = GenStatus::ok;
        record.tools = std::move(parsed.tools);
        return record;
    }
    return record;
}

/// One vector per hypothetical tool when the record is usable; otherwise a
/// single question-style fallback vector. Never returns an empty list.
inline std::vector<SearchVector> build_search_vectors(const Query& query, const GenerationRecord& record,
                                                      VectorStyle style) {
    std::vector<SearchVector> vectors;
    if (style != VectorStyle::Q && record.status == GenStatus::ok && !record.tools.empty()) {
        for (const auto& ht : record.tools) {
            SearchVector v;
            v.query_id = query.id;
            v.style = style;
            v.source = SearchVector::Source::hypothetical;
            v.text = (style == VectorStyle::QTND) ? qtnd_text(query.text, ht) : tnd_text(ht);
            vectors.push_back(std::move(v));
        }
        return vectors;
    }
    SearchVector fallback;
    fallback.query_id = query.id;
    fallback.style = VectorStyle::Q;
    fallback.text = query.text;
    fallback.source = SearchVector::Source::fallback_question;
    vectors.push_back(std::move(fallback));
    return vectors;
}

} // namespace tooldreamer
