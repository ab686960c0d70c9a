#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tooldreamer/adapter.hpp"
#include "tooldreamer/aligner.hpp"
#include "tooldreamer/corpus.hpp"
#include "tooldreamer/embedding.hpp"
#include "tooldreamer/errors.hpp"

namespace tooldreamer {

struct TrainingTriplet {
    std::string query_id;
    std::string anchor_text;
    std::string gold_tool_id;
    std::vector<std::string> negative_tool_ids;
    std::vector<std::string> negative_sources; // "annotated" or "corpus", per negative

    json to_json() const {
        return json{{"query_id", query_id},
                    {"anchor_text", anchor_text},
                    {"gold_tool_id", gold_tool_id},
                    {"negative_tool_ids", negative_tool_ids},
                    {"negative_sources", negative_sources}};
    }

    static TrainingTriplet from_json(const json& j) {
        TrainingTriplet t;
        t.query_id = j.at("query_id").get<std::string>();
        t.anchor_text = j.at("anchor_text").get<std::string>();
        t.gold_tool_id = j.at("gold_tool_id").get<std::string>();
        t.negative_tool_ids = j.at("negative_tool_ids").get<std::vector<std::string>>();
        t.negative_sources = j.value("negative_sources", std::vector<std::string>{});
        return t;
    }
};

struct TrainConfig {
    double learning_rate = 1e-5;
    std::size_t epochs = 1;
    std::size_t batch_size = 1;
    std::size_t k_negatives = 7;
    std::uint64_t seed = 0;
    double temperature = 1.0;

    std::string echo() const {
        json j{{"learning_rate", learning_rate}, {"epochs", epochs},       {"batch_size", batch_size},
               {"k_negatives", k_negatives},     {"seed", seed},           {"temperature", temperature}};
        return j.dump();
    }
};

/// Builds one triplet per aligned pair. Negatives come from the query's
/// annotated negative set first (uniform, without replacement), topped up
/// from the rest of the corpus minus the query's golds when the annotated
/// set is short. Sampling is deterministic for a fixed seed.
inline std::vector<TrainingTriplet> build_triplets(const std::vector<AlignedPair>& pairs,
                                                   const QueryCollection& queries,
                                                   const ToolCollection& tools, VectorStyle style,
                                                   std::size_t k_negatives, std::uint64_t seed) {
    if (style == VectorStyle::Q) throw usage_error("triplet anchors require TND or QTND style");
    if (k_negatives == 0) throw usage_error("k_negatives must be at least 1");

    std::vector<AlignedPair> ordered = pairs;
    std::stable_sort(ordered.begin(), ordered.end(), [](const AlignedPair& a, const AlignedPair& b) {
        if (a.query_id != b.query_id) return a.query_id < b.query_id;
        return a.gold_tool_id < b.gold_tool_id;
    });

    std::mt19937_64 rng(seed);
    std::vector<TrainingTriplet> triplets;
    triplets.reserve(ordered.size());

    for (const auto& pair : ordered) {
        const Query& query = queries.at(pair.query_id);

        TrainingTriplet triplet;
        triplet.query_id = pair.query_id;
        triplet.gold_tool_id = pair.gold_tool_id;
        triplet.anchor_text =
            (style == VectorStyle::QTND) ? qtnd_text(query.text, pair.ht) : tnd_text(pair.ht);

        // Annotated negatives first.
        std::vector<std::string> annotated = query.negative_tool_ids; // sorted
        std::size_t take = std::min(k_negatives, annotated.size());
        for (std::size_t idx : sample_indices(annotated.size(), take, rng)) {
            triplet.negative_tool_ids.push_back(annotated[idx]);
            triplet.negative_sources.push_back("annotated");
        }

        if (triplet.negative_tool_ids.size() < k_negatives) {
            std::set<std::string> excluded(query.gold_tool_ids.begin(), query.gold_tool_ids.end());
            excluded.insert(triplet.negative_tool_ids.begin(), triplet.negative_tool_ids.end());
            std::vector<std::string> pool;
            for (const auto& tool : tools.items()) {
                if (!excluded.count(tool.id)) pool.push_back(tool.id);
            }
            std::size_t still_needed = k_negatives - triplet.negative_tool_ids.size();
            if (pool.size() < still_needed) {
                throw data_error("corpus too small to supply " + std::to_string(k_negatives) +
                                 " negatives for query " + pair.query_id);
            }
            for (std::size_t idx : sample_indices(pool.size(), still_needed, rng)) {
                triplet.negative_tool_ids.push_back(pool[idx]);
                triplet.negative_sources.push_back("corpus");
            }
        }
        triplets.push_back(std::move(triplet));
    }
    return triplets;
}

/// -log( e^{s(A,GT)/tau} / (e^{s(A,GT)/tau} + sum_i e^{s(A,n_i)/tau}) ) with
/// s = cosine. Computed via log-sum-exp for stability.
inline double info_nce_loss(const EmbeddingVector& anchor, const EmbeddingVector& gold,
                            const std::vector<EmbeddingVector>& negatives, double temperature = 1.0) {
    if (temperature <= 0.0) throw usage_error("temperature must be positive");
    std::vector<double> z;
    z.reserve(negatives.size() + 1);
    z.push_back(cosine_similarity(anchor, gold) / temperature);
    for (const auto& n : negatives) z.push_back(cosine_similarity(anchor, n) / temperature);
    double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double zi : z) sum += std::exp(zi - zmax);
    return -(z[0] - zmax - std::log(sum));
}

namespace detail {

struct Mapped {
    EmbeddingVector unit; // normalize(W x)
    double norm = 0.0;    // |W x|
};

inline Mapped map_through(const AdapterModel& adapter, const EmbeddingVector& base) {
    Mapped m;
    EmbeddingVector mapped = adapter.apply(base);
    m.norm = norm(mapped);
    if (m.norm == 0.0) throw data_error("adapter maps a vector to zero; cosine undefined");
    m.unit.resize(mapped.size());
    for (std::size_t i = 0; i < mapped.size(); ++i) m.unit[i] = mapped[i] / m.norm;
    return m;
}

} // namespace detail

/// InfoNCE loss with the adapter applied (and re-normalized) on anchor, gold,
/// and negatives. The quantity whose gradient the trainer follows.
inline double adapter_loss(const AdapterModel& adapter, const EmbeddingVector& anchor_base,
                           const EmbeddingVector& gold_base,
                           const std::vector<EmbeddingVector>& neg_bases, double temperature = 1.0) {
    detail::Mapped a = detail::map_through(adapter, anchor_base);
    detail::Mapped g = detail::map_through(adapter, gold_base);
    std::vector<EmbeddingVector> mapped_negs;
    mapped_negs.reserve(neg_bases.size());
    for (const auto& n : neg_bases) mapped_negs.push_back(detail::map_through(adapter, n).unit);
    return info_nce_loss(a.unit, g.unit, mapped_negs, temperature);
}

/// Analytic gradient of adapter_loss with respect to the weight matrix.
///
/// With u = W x, u_hat = u/|u| and s_B = a_hat . b_hat, the softmax
/// coefficients are dL/ds_gold = (p_gold - 1)/tau and dL/ds_i = p_i/tau.
/// Each pair contributes through both sides of the cosine:
///   d s / dW  =  ((b_hat - s a_hat)/|W a|) a^T  +  ((a_hat - s b_hat)/|W b|) b^T.
inline std::vector<double> loss_gradient(const AdapterModel& adapter, const EmbeddingVector& anchor_base,
                                         const EmbeddingVector& gold_base,
                                         const std::vector<EmbeddingVector>& neg_bases,
                                         double temperature = 1.0) {
    if (temperature <= 0.0) throw usage_error("temperature must be positive");
    std::size_t d = adapter.dim;

    detail::Mapped a = detail::map_through(adapter, anchor_base);
    std::vector<detail::Mapped> targets;
    targets.push_back(detail::map_through(adapter, gold_base));
    for (const auto& n : neg_bases) targets.push_back(detail::map_through(adapter, n));

    std::vector<double> z(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) z[t] = dot(a.unit, targets[t].unit) / temperature;
    double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double zi : z) sum += std::exp(zi - zmax);

    std::vector<double> grad(d * d, 0.0);
    const std::vector<const EmbeddingVector*> bases = [&] {
        std::vector<const EmbeddingVector*> b{&gold_base};
        for (const auto& n : neg_bases) b.push_back(&n);
        return b;
    }();

    for (std::size_t t = 0; t < targets.size(); ++t) {
        double p = std::exp(z[t] - zmax) / sum;
        double coeff = ((t == 0) ? (p - 1.0) : p) / temperature;
        double s = dot(a.unit, targets[t].unit);

        // anchor side: coeff * ((b_hat - s a_hat)/|Wa|) outer anchor_base
        // target side: coeff * ((a_hat - s b_hat)/|Wb|) outer target_base
        for (std::size_t r = 0; r < d; ++r) {
            double left_a = coeff * (targets[t].unit[r] - s * a.unit[r]) / a.norm;
            double left_b = coeff * (a.unit[r] - s * targets[t].unit[r]) / targets[t].norm;
            double* grow = grad.data() + r * d;
            const double* ab = anchor_base.data();
            const double* bb = bases[t]->data();
            for (std::size_t c = 0; c < d; ++c) grow[c] += left_a * ab[c] + left_b * bb[c];
        }
    }
    return grad;
}

struct TrainResult {
    AdapterModel adapter;
    std::vector<double> step_losses; // loss at the pre-update weights, one per triplet visit
};

/// Plain SGD from an identity-initialized weight matrix. The epoch order is a
/// seeded Fisher-Yates shuffle, so runs are bit-reproducible for a fixed seed
/// and deterministic provider. Aborts on a non-finite loss.
inline TrainResult train(const std::vector<TrainingTriplet>& triplets, const ToolCollection& tools,
                         const EmbeddingProvider& provider, const TrainConfig& config) {
    if (triplets.empty()) throw data_error("cannot train on an empty triplet set");
    if (config.batch_size == 0) throw usage_error("batch_size must be at least 1");

    // Embed every distinct text once, up front.
    std::set<std::string> unique_texts;
    for (const auto& t : triplets) {
        unique_texts.insert(t.anchor_text);
        unique_texts.insert(tools.at(t.gold_tool_id).embed_text());
        for (const auto& id : t.negative_tool_ids) unique_texts.insert(tools.at(id).embed_text());
    }
    std::vector<std::string> texts(unique_texts.begin(), unique_texts.end());
    auto vectors = provider.embed_batch(texts);
    std::map<std::string, EmbeddingVector> cache;
    for (std::size_t i = 0; i < texts.size(); ++i) cache[texts[i]] = std::move(vectors[i]);

    std::size_t dim = provider.dim();
    TrainResult result;
    result.adapter = AdapterModel::identity(dim);
    result.adapter.config_echo = config.echo();

    std::mt19937_64 rng(config.seed);
    std::vector<double> grad_acc(dim * dim, 0.0);
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order = sample_indices(triplets.size(), triplets.size(), rng);
        std::size_t in_batch = 0;
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const TrainingTriplet& triplet = triplets[order[pos]];
            const EmbeddingVector& anchor = cache.at(triplet.anchor_text);
            const EmbeddingVector& gold = cache.at(tools.at(triplet.gold_tool_id).embed_text());
            std::vector<EmbeddingVector> negs;
            negs.reserve(triplet.negative_tool_ids.size());
            for (const auto& id : triplet.negative_tool_ids) negs.push_back(cache.at(tools.at(id).embed_text()));

            double loss = adapter_loss(result.adapter, anchor, gold, negs, config.temperature);
            if (!std::isfinite(loss)) {
                throw data_error("non-finite loss at step " + std::to_string(step));
            }
            result.step_losses.push_back(loss);
            ++step;

            auto grad = loss_gradient(result.adapter, anchor, gold, negs, config.temperature);
            for (std::size_t i = 0; i < grad.size(); ++i) grad_acc[i] += grad[i];
            ++in_batch;

            if (in_batch == config.batch_size || pos + 1 == order.size()) {
                double scale = config.learning_rate / static_cast<double>(in_batch);
                for (std::size_t i = 0; i < grad_acc.size(); ++i) {
                    result.adapter.weight[i] -= scale * grad_acc[i];
                    grad_acc[i] = 0.0;
                }
                in_batch = 0;
            }
        }
    }
    return result;
}

inline void save_loss_log(const std::filesystem::path& path, const std::vector<double>& losses) {
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, losses[i]);
        csv += buf;
    }
    write_text_file(path, csv);
}

} // namespace tooldreamer
