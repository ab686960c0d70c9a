#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "tooldreamer/adapter.hpp"
#include "tooldreamer/corpus.hpp"
#include "tooldreamer/embedding.hpp"
#include "tooldreamer/ranked_list.hpp"

namespace tooldreamer {

/// Exact cosine retrieval over embedded tool texts. Rows are unit vectors, so
/// cosine is a plain dot product. Provider and adapter fingerprints are baked
/// in to stop an index built under one configuration from serving queries
/// embedded under another.
class DenseIndex {
public:
    static constexpr int kFormatVersion = 1;

    static DenseIndex build(const ToolCollection& tools, const EmbeddingProvider& provider,
                            const AdapterModel* adapter = nullptr) {
        if (tools.empty()) throw data_error("cannot build dense index over an empty corpus");
        if (adapter && adapter->dim != provider.dim()) {
            throw data_error("adapter dim " + std::to_string(adapter->dim) +
                             " does not match provider dim " + std::to_string(provider.dim()));
        }
        DenseIndex index;
        index.dim_ = provider.dim();
        index.provider_fingerprint_ = provider.fingerprint();
        index.adapter_fingerprint_ = adapter ? adapter->fingerprint() : "";

        std::vector<std::string> texts;
        texts.reserve(tools.size());
        for (const auto& tool : tools.items()) {
            index.tool_ids_.push_back(tool.id);
            texts.push_back(tool.embed_text());
        }
        auto vectors = provider.embed_batch(texts);
        index.matrix_.reserve(vectors.size());
        for (auto& v : vectors) {
            if (adapter) v = adapter->apply(v);
            index.matrix_.push_back(normalized(v));
        }
        return index;
    }

    std::size_t size() const { return tool_ids_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<std::string>& tool_ids() const { return tool_ids_; }
    const std::vector<EmbeddingVector>& matrix() const { return matrix_; }
    const std::string& provider_fingerprint() const { return provider_fingerprint_; }
    const std::string& adapter_fingerprint() const { return adapter_fingerprint_; }

    /// Top-k by dot product of normalized vectors; ties by ascending tool id.
    RankedList search(const std::string& text, const EmbeddingProvider& provider,
                      const AdapterModel* adapter, std::size_t k) const {
        check_fingerprints(provider, adapter);
        EmbeddingVector q = provider.embed(text);
        if (adapter) q = adapter->apply(q);
        q = normalized(q);

        std::vector<std::size_t> order(matrix_.size());
        std::vector<double> scores(matrix_.size());
        for (std::size_t i = 0; i < matrix_.size(); ++i) {
            order[i] = i;
            scores[i] = dot(q, matrix_[i]);
        }
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return tool_ids_[a] < tool_ids_[b];
        });
        if (order.size() > k) order.resize(k);

        RankedList result;
        result.source_tag = "dense";
        for (std::size_t i : order) result.items.push_back({tool_ids_[i], scores[i]});
        return result;
    }

    void save(const std::filesystem::path& path) const {
        json rows = json::array();
        for (const auto& row : matrix_) rows.push_back(row);
        json j{{"format_version", kFormatVersion},
               {"dim", dim_},
               {"provider_fingerprint", provider_fingerprint_},
               {"adapter_fingerprint", adapter_fingerprint_},
               {"tool_ids", tool_ids_},
               {"matrix", rows}};
        write_text_file(path, j.dump() + "\n");
    }

    /// Refuses indexes persisted under a different provider/adapter pairing.
    static DenseIndex load(const std::filesystem::path& path, const EmbeddingProvider& provider,
                           const AdapterModel* adapter) {
        json j = json::parse(read_text_file(path));
        if (!j.contains("format_version") || j["format_version"].get<int>() != kFormatVersion) {
            throw data_error("unsupported dense index format version");
        }
        DenseIndex index;
        index.dim_ = j.at("dim").get<std::size_t>();
        index.provider_fingerprint_ = j.at("provider_fingerprint").get<std::string>();
        index.adapter_fingerprint_ = j.at("adapter_fingerprint").get<std::string>();
        index.tool_ids_ = j.at("tool_ids").get<std::vector<std::string>>();
        for (const auto& row : j.at("matrix")) index.matrix_.push_back(row.get<EmbeddingVector>());
        index.check_fingerprints(provider, adapter);
        return index;
    }

private:
    void check_fingerprints(const EmbeddingProvider& provider, const AdapterModel* adapter) const {
        if (provider.fingerprint() != provider_fingerprint_) {
            throw data_error("dense index provider fingerprint mismatch: index=" + provider_fingerprint_ +
                             " query=" + provider.fingerprint());
        }
        std::string query_side = adapter ? adapter->fingerprint() : "";
        if (query_side != adapter_fingerprint_) {
            throw data_error("dense index adapter fingerprint mismatch: index=\"" + adapter_fingerprint_ +
                             "\" query=\"" + query_side + "\"");
        }
    }

    std::size_t dim_ = 0;
    std::vector<std::string> tool_ids_;
    std::vector<EmbeddingVector> matrix_;
    std::string provider_fingerprint_;
    std::string adapter_fingerprint_;
};

} // namespace tooldreamer
