#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tooldreamer/errors.hpp"
#include "tooldreamer/jsonl.hpp"
#include "tooldreamer/util.hpp"

namespace tooldreamer {

using EmbeddingVector = std::vector<double>;

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm(const EmbeddingVector& v) { return std::sqrt(dot(v, v)); }

inline EmbeddingVector normalized(const EmbeddingVector& v) {
    double n = norm(v);
    if (n == 0.0) throw data_error("cannot normalize a zero vector");
    EmbeddingVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.size() != b.size()) {
        throw data_error("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    }
    double na = norm(a);
    double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw data_error("cosine: zero vector");
    return dot(a, b) / (na * nb);
}

/// Text-to-vector provider. Implementations must be safe for concurrent
/// embed_batch calls and must return one vector per input, in input order.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dim() const = 0;
    virtual std::string fingerprint() const = 0;
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const = 0;

    EmbeddingVector embed(const std::string& text) const { return embed_batch({text})[0]; }
};

/// Offline provider: mt19937_64 seeded from the FNV-1a hash of the text bytes,
/// dim standard normals via Box-Muller, then normalize. Distinct texts land
/// roughly uniformly on the sphere, and the output depends on nothing but the
/// input bytes.
class DeterministicProvider final : public EmbeddingProvider {
public:
    explicit DeterministicProvider(std::size_t dim) : dim_(dim) {
        if (dim_ == 0) throw usage_error("embedding dim must be positive");
    }

    std::size_t dim() const override { return dim_; }

    std::string fingerprint() const override { return "deterministic_test:d" + std::to_string(dim_); }

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& text : texts) {
            std::mt19937_64 rng(fnv1a64(text));
            EmbeddingVector v(dim_);
            for (std::size_t i = 0; i + 1 < dim_; i += 2) {
                auto [z0, z1] = box_muller(rng);
                v[i] = z0;
                v[i + 1] = z1;
            }
            if (dim_ % 2 == 1) v[dim_ - 1] = box_muller(rng).first;
            out.push_back(normalized(v));
        }
        return out;
    }

private:
    // std::normal_distribution is implementation-defined; a hand-rolled
    // Box-Muller keeps the stream pinned to the mt19937_64 spec.
    static std::pair<double, double> box_muller(std::mt19937_64& rng) {
        double u1 = 0.0;
        while (u1 == 0.0) u1 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        return {r * std::cos(theta), r * std::sin(theta)};
    }

    std::size_t dim_;
};

/// Store file: a header line {"dim": N} followed by one
/// {"text_hash": hex, "embedding": [...]} line per known text.
class FileBackedProvider final : public EmbeddingProvider {
public:
    explicit FileBackedProvider(const std::filesystem::path& path) : path_(path.string()) {
        auto records = read_jsonl(path);
        if (records.empty()) throw data_error("embedding store is empty: " + path.string());
        const json& header = records[0].value;
        if (!header.contains("dim") || !header["dim"].is_number_unsigned()) {
            throw data_error(path.string() + ": first line must be a {\"dim\": N} header");
        }
        dim_ = header["dim"].get<std::size_t>();
        for (std::size_t i = 1; i < records.size(); ++i) {
            const auto& [line, record] = records[i];
            if (!record.contains("text_hash") || !record.contains("embedding")) {
                throw data_error(path.string() + ":" + std::to_string(line) +
                                 ": expected {\"text_hash\", \"embedding\"}");
            }
            EmbeddingVector v = record["embedding"].get<EmbeddingVector>();
            if (v.size() != dim_) {
                throw data_error(path.string() + ":" + std::to_string(line) + ": embedding has dim " +
                                 std::to_string(v.size()) + ", store header says " + std::to_string(dim_));
            }
            store_[record["text_hash"].get<std::string>()] = std::move(v);
        }
    }

    std::size_t dim() const override { return dim_; }

    std::string fingerprint() const override {
        return "file_backed:" + to_hex64(fnv1a64(path_)) + ":d" + std::to_string(dim_);
    }

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& text : texts) {
            auto it = store_.find(to_hex64(fnv1a64(text)));
            if (it == store_.end()) {
                throw data_error("embedding store has no entry for text \"" + text + "\"");
            }
            out.push_back(it->second);
        }
        return out;
    }

    /// Writes a store usable by this provider; keys are FNV-1a hashes of the
    /// texts.
    static void save_store(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, EmbeddingVector>>& entries,
                           std::size_t dim) {
        std::vector<json> records;
        records.push_back(json{{"dim", dim}});
        for (const auto& [text, vec] : entries) {
            if (vec.size() != dim) throw data_error("store entry dim mismatch for text \"" + text + "\"");
            records.push_back(json{{"text_hash", to_hex64(fnv1a64(text))}, {"embedding", vec}});
        }
        write_jsonl(path, records);
    }

private:
    std::string path_;
    std::size_t dim_ = 0;
    std::map<std::string, EmbeddingVector> store_;
};

} // namespace tooldreamer
