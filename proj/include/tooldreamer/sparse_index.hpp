#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tooldreamer/corpus.hpp"
#include "tooldreamer/errors.hpp"
#include "tooldreamer/ranked_list.hpp"

namespace tooldreamer {

/// Lowercases and splits on any non-alphanumeric byte; empty tokens dropped.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        bool alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
        if (alnum) {
            current.push_back(static_cast<char>((c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

/// Okapi BM25 over "name. description" per tool, with the +1-smoothed IDF
/// ln(1 + (N - df + 0.5) / (df + 0.5)) so scores stay non-negative.
class Bm25Index {
public:
    static constexpr int kFormatVersion = 1;

    Bm25Index() = default;

    static Bm25Index build(const ToolCollection& tools, Bm25Params params = {}) {
        if (tools.empty()) throw data_error("cannot build BM25 index over an empty corpus");
        Bm25Index index;
        index.params_ = params;
        index.doc_ids_.reserve(tools.size());
        index.doc_lengths_.reserve(tools.size());
        std::size_t total_length = 0;
        for (const auto& tool : tools.items()) {
            std::uint32_t ordinal = static_cast<std::uint32_t>(index.doc_ids_.size());
            index.doc_ids_.push_back(tool.id);
            auto tokens = tokenize(tool.name + ". " + tool.description);
            index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
            total_length += tokens.size();
            std::map<std::string, std::uint32_t> tf;
            for (const auto& token : tokens) ++tf[token];
            for (const auto& [term, freq] : tf) index.postings_[term].push_back({ordinal, freq});
        }
        index.avg_doc_length_ = static_cast<double>(total_length) / static_cast<double>(tools.size());
        return index;
    }

    std::size_t doc_count() const { return doc_ids_.size(); }
    double avg_doc_length() const { return avg_doc_length_; }
    const Bm25Params& params() const { return params_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }

    double idf(const std::string& term) const {
        auto it = postings_.find(term);
        if (it == postings_.end()) return 0.0;
        double n = static_cast<double>(doc_count());
        double df = static_cast<double>(it->second.size());
        return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    }

    double score(const std::vector<std::string>& query_tokens, std::size_t ordinal) const {
        if (ordinal >= doc_ids_.size()) throw data_error("BM25 ordinal out of range");
        double len = static_cast<double>(doc_lengths_[ordinal]);
        double acc = 0.0;
        for (const auto& term : query_tokens) {
            auto it = postings_.find(term);
            if (it == postings_.end()) continue;
            const auto& plist = it->second;
            auto pit = std::lower_bound(plist.begin(), plist.end(), ordinal,
                                        [](const Posting& p, std::size_t key) { return p.ordinal < key; });
            if (pit == plist.end() || pit->ordinal != ordinal) continue;
            double tf = static_cast<double>(pit->frequency);
            double denom = tf + params_.k1 * (1.0 - params_.b + params_.b * len / avg_doc_length_);
            acc += idf(term) * tf * (params_.k1 + 1.0) / denom;
        }
        return acc;
    }

    /// Top-k by score (descending), ties by ascending tool id. Documents that
    /// match no query term are excluded; an empty query yields an empty list.
    RankedList search(const std::string& query_text, std::size_t k) const {
        RankedList result;
        result.source_tag = "bm25";
        auto query_tokens = tokenize(query_text);
        if (query_tokens.empty()) return result;

        std::vector<double> scores(doc_ids_.size(), 0.0);
        std::vector<bool> matched(doc_ids_.size(), false);
        // Summation is per query-token occurrence, matching score().
        for (const auto& term : query_tokens) {
            auto it = postings_.find(term);
            if (it == postings_.end()) continue;
            double term_idf = idf(term);
            for (const auto& posting : it->second) {
                double len = static_cast<double>(doc_lengths_[posting.ordinal]);
                double tf = static_cast<double>(posting.frequency);
                double denom = tf + params_.k1 * (1.0 - params_.b + params_.b * len / avg_doc_length_);
                scores[posting.ordinal] += term_idf * tf * (params_.k1 + 1.0) / denom;
                matched[posting.ordinal] = true;
            }
        }

        std::vector<std::size_t> hit;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (matched[i]) hit.push_back(i);
        }
        std::sort(hit.begin(), hit.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return doc_ids_[a] < doc_ids_[b];
        });
        if (hit.size() > k) hit.resize(k);
        for (std::size_t i : hit) result.items.push_back({doc_ids_[i], scores[i]});
        return result;
    }

    json to_json() const {
        json postings = json::object();
        for (const auto& [term, plist] : postings_) {
            json arr = json::array();
            for (const auto& p : plist) arr.push_back(json::array({p.ordinal, p.frequency}));
            postings[term] = arr;
        }
        return json{{"format_version", kFormatVersion},
                    {"k1", params_.k1},
                    {"b", params_.b},
                    {"doc_ids", doc_ids_},
                    {"doc_lengths", doc_lengths_},
                    {"avg_doc_length", avg_doc_length_},
                    {"postings", postings}};
    }

    static Bm25Index from_json(const json& j) {
        if (!j.contains("format_version") || j["format_version"].get<int>() != kFormatVersion) {
            throw data_error("unsupported BM25 index format version");
        }
        Bm25Index index;
        index.params_.k1 = j.at("k1").get<double>();
        index.params_.b = j.at("b").get<double>();
        index.doc_ids_ = j.at("doc_ids").get<std::vector<std::string>>();
        index.doc_lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
        index.avg_doc_length_ = j.at("avg_doc_length").get<double>();
        for (const auto& [term, arr] : j.at("postings").items()) {
            for (const auto& entry : arr) {
                index.postings_[term].push_back(
                    {entry[0].get<std::uint32_t>(), entry[1].get<std::uint32_t>()});
            }
        }
        return index;
    }

    void save(const std::filesystem::path& path) const { write_text_file(path, to_json().dump() + "\n"); }

    static Bm25Index load(const std::filesystem::path& path) {
        return from_json(json::parse(read_text_file(path)));
    }

private:
    struct Posting {
        std::uint32_t ordinal;
        std::uint32_t frequency;
    };

    std::map<std::string, std::vector<Posting>> postings_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    Bm25Params params_;
};

} // namespace tooldreamer
