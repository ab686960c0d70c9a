#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tooldreamer/aligner.hpp"
#include "tooldreamer/corpus.hpp"
#include "tooldreamer/dense_index.hpp"
#include "tooldreamer/embedding.hpp"
#include "tooldreamer/evaluator.hpp"
#include "tooldreamer/fusion.hpp"
#include "tooldreamer/http_providers.hpp"
#include "tooldreamer/hypothesizer.hpp"
#include "tooldreamer/sparse_index.hpp"
#include "tooldreamer/trainer.hpp"
#include "tooldreamer/util.hpp"

namespace tooldreamer {

enum class RetrieverKind { bm25, dense };
enum class FusionKind { rrf, llm };
enum class PromptMode { standard, inferior };

inline std::string to_string(RetrieverKind r) { return r == RetrieverKind::bm25 ? "bm25" : "dense"; }
inline std::string to_string(FusionKind f) { return f == FusionKind::rrf ? "rrf" : "llm"; }
inline std::string to_string(PromptMode p) { return p == PromptMode::standard ? "standard" : "inferior"; }

struct EmbeddingConfig {
    std::string kind = "deterministic_test"; // deterministic_test | file_backed | remote_http
    std::size_t dim = 64;
    std::string store_path;
    std::string base_url;
    std::string model;
    std::string token_env;
};

struct LlmConfig {
    std::string kind; // mock | remote_http | "" (absent)
    std::string fixtures;
    std::string base_url;
    std::string model;
    double temperature = 0.0;
    std::string token_env;
};

/// One declarative config document drives every stage. String values may
/// reference environment variables as ${NAME}; interpolation happens at load.
struct PipelineConfig {
    std::string tools_path;
    std::string queries_path;
    std::string output_dir;
    std::string prompts_dir = "prompts";

    EmbeddingConfig embedding;
    LlmConfig llm;

    RetrieverKind retriever = RetrieverKind::bm25;
    VectorStyle style = VectorStyle::Q;
    AlignMethod alignment = AlignMethod::hungarian;
    FusionKind fusion = FusionKind::rrf;
    PromptMode prompt_mode = PromptMode::standard;

    std::size_t k = 10;
    double rrf_k_const = 60.0;
    Bm25Params bm25;
    TrainConfig train;
    bool train_enabled = false; // run-all runs the training phase (dense retriever only)
    std::size_t sample_n = 0;   // 0 = use every filtered query for training
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::size_t retries_train = 2;
    std::size_t retries_test = 0;

    std::filesystem::path out(const std::string& name) const {
        return std::filesystem::path(output_dir) / name;
    }

    json to_json() const {
        return json{
            {"paths", json{{"tools", tools_path}, {"queries", queries_path}, {"output_dir", output_dir}}},
            {"prompts_dir", prompts_dir},
            {"embedding",
             json{{"kind", embedding.kind},
                  {"dim", embedding.dim},
                  {"store_path", embedding.store_path},
                  {"base_url", embedding.base_url},
                  {"model", embedding.model},
                  {"token_env", embedding.token_env}}},
            {"llm",
             json{{"kind", llm.kind},
                  {"fixtures", llm.fixtures},
                  {"base_url", llm.base_url},
                  {"model", llm.model},
                  {"temperature", llm.temperature},
                  {"token_env", llm.token_env}}},
            {"retriever", to_string(retriever)},
            {"style", to_string(style)},
            {"alignment", to_string(alignment)},
            {"fusion", to_string(fusion)},
            {"prompt_mode", to_string(prompt_mode)},
            {"k", k},
            {"rrf_k_const", rrf_k_const},
            {"bm25", json{{"k1", bm25.k1}, {"b", bm25.b}}},
            {"train",
             json{{"enabled", train_enabled},
                  {"learning_rate", train.learning_rate},
                  {"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"k_negatives", train.k_negatives},
                  {"seed", train.seed},
                  {"temperature", train.temperature}}},
            {"sample_n", sample_n},
            {"seed", seed},
            {"workers", workers},
            {"retries", json{{"train", retries_train}, {"test", retries_test}}}};
    }
};

namespace detail {

inline void interpolate_env(json& node) {
    if (node.is_string()) {
        std::string s = node.get<std::string>();
        std::size_t pos = 0;
        while ((pos = s.find("${", pos)) != std::string::npos) {
            std::size_t end = s.find('}', pos);
            if (end == std::string::npos) break;
            std::string name = s.substr(pos + 2, end - pos - 2);
            const char* value = std::getenv(name.c_str());
            if (!value) throw usage_error("config references unset environment variable " + name);
            s.replace(pos, end - pos + 1, value);
            pos += std::string(value).size();
        }
        node = s;
    } else if (node.is_object() || node.is_array()) {
        for (auto& child : node) interpolate_env(child);
    }
}

} // namespace detail

inline PipelineConfig parse_pipeline_config(json doc) {
    detail::interpolate_env(doc);
    PipelineConfig c;
    if (doc.contains("paths")) {
        const auto& paths = doc["paths"];
        c.tools_path = paths.value("tools", std::string());
        c.queries_path = paths.value("queries", std::string());
        c.output_dir = paths.value("output_dir", std::string());
    }
    c.prompts_dir = doc.value("prompts_dir", c.prompts_dir);
    if (doc.contains("embedding")) {
        const auto& e = doc["embedding"];
        c.embedding.kind = e.value("kind", c.embedding.kind);
        c.embedding.dim = e.value("dim", c.embedding.dim);
        c.embedding.store_path = e.value("store_path", std::string());
        c.embedding.base_url = e.value("base_url", std::string());
        c.embedding.model = e.value("model", std::string());
        c.embedding.token_env = e.value("token_env", std::string());
    }
    if (doc.contains("llm")) {
        const auto& l = doc["llm"];
        c.llm.kind = l.value("kind", std::string());
        c.llm.fixtures = l.value("fixtures", std::string());
        c.llm.base_url = l.value("base_url", std::string());
        c.llm.model = l.value("model", std::string());
        c.llm.temperature = l.value("temperature", 0.0);
        c.llm.token_env = l.value("token_env", std::string());
    }
    if (doc.contains("retriever")) {
        std::string r = doc["retriever"].get<std::string>();
        if (r == "bm25") c.retriever = RetrieverKind::bm25;
        else if (r == "dense") c.retriever = RetrieverKind::dense;
        else throw usage_error("unknown retriever: " + r);
    }
    if (doc.contains("style")) c.style = vector_style_from_string(doc["style"].get<std::string>());
    if (doc.contains("alignment")) c.alignment = align_method_from_string(doc["alignment"].get<std::string>());
    if (doc.contains("fusion")) {
        std::string f = doc["fusion"].get<std::string>();
        if (f == "rrf") c.fusion = FusionKind::rrf;
        else if (f == "llm") c.fusion = FusionKind::llm;
        else throw usage_error("unknown fusion: " + f);
    }
    if (doc.contains("prompt_mode")) {
        std::string p = doc["prompt_mode"].get<std::string>();
        if (p == "standard") c.prompt_mode = PromptMode::standard;
        else if (p == "inferior") c.prompt_mode = PromptMode::inferior;
        else throw usage_error("unknown prompt_mode: " + p);
    }
    c.k = doc.value("k", c.k);
    c.rrf_k_const = doc.value("rrf_k_const", c.rrf_k_const);
    if (doc.contains("bm25")) {
        c.bm25.k1 = doc["bm25"].value("k1", c.bm25.k1);
        c.bm25.b = doc["bm25"].value("b", c.bm25.b);
    }
    if (doc.contains("train")) {
        const auto& t = doc["train"];
        c.train_enabled = t.value("enabled", c.train_enabled);
        c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
        c.train.epochs = t.value("epochs", c.train.epochs);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.k_negatives = t.value("k_negatives", c.train.k_negatives);
        c.train.seed = t.value("seed", c.train.seed);
        c.train.temperature = t.value("temperature", c.train.temperature);
    }
    c.sample_n = doc.value("sample_n", c.sample_n);
    c.seed = doc.value("seed", c.seed);
    c.workers = doc.value("workers", c.workers);
    if (doc.contains("retries")) {
        c.retries_train = doc["retries"].value("train", c.retries_train);
        c.retries_test = doc["retries"].value("test", c.retries_test);
    }

    if (c.tools_path.empty() || c.queries_path.empty() || c.output_dir.empty()) {
        throw usage_error("config must set paths.tools, paths.queries, and paths.output_dir");
    }
    if (c.k == 0) throw usage_error("k must be at least 1");
    if (c.fusion == FusionKind::llm && c.llm.kind.empty()) {
        throw usage_error("llm fusion requires an llm provider config");
    }
    return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    json doc = json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) throw usage_error("config file is not valid JSON: " + path.string());
    return parse_pipeline_config(std::move(doc));
}

inline std::unique_ptr<EmbeddingProvider> make_embedding_provider(const PipelineConfig& config) {
    const auto& e = config.embedding;
    if (e.kind == "deterministic_test") return std::make_unique<DeterministicProvider>(e.dim);
    if (e.kind == "file_backed") {
        if (e.store_path.empty()) throw usage_error("file_backed embedding provider needs store_path");
        return std::make_unique<FileBackedProvider>(e.store_path);
    }
    if (e.kind == "remote_http") {
        if (e.base_url.empty()) throw usage_error("remote_http embedding provider needs base_url");
        return std::make_unique<RemoteEmbeddingProvider>(e.base_url, e.model, e.dim, e.token_env);
    }
    throw usage_error("unknown embedding provider kind: " + e.kind);
}

inline std::unique_ptr<LlmProvider> make_llm_provider(const PipelineConfig& config,
                                                      const std::string& section) {
    const auto& l = config.llm;
    if (l.kind.empty()) throw usage_error("this stage needs an llm provider config");
    if (l.kind == "mock") {
        if (l.fixtures.empty()) throw usage_error("mock llm provider needs a fixtures path");
        return std::make_unique<MockLlmProvider>(MockLlmProvider::load_fixtures(l.fixtures, section));
    }
    if (l.kind == "remote_http") {
        if (l.base_url.empty()) throw usage_error("remote_http llm provider needs base_url");
        return std::make_unique<HttpLlmProvider>(l.base_url, l.model, l.temperature, l.token_env);
    }
    throw usage_error("unknown llm provider kind: " + l.kind);
}

// Artifact names. Stages communicate only through these files.
namespace artifact {
inline constexpr const char* kFilteredTools = "tools.filtered.jsonl";
inline constexpr const char* kFilteredQueries = "queries.filtered.jsonl";
inline constexpr const char* kFiltrationReport = "filtration_report.json";
inline constexpr const char* kSampledQueries = "queries.sampled.jsonl";
inline constexpr const char* kTrainGenerations = "generations.train.jsonl";
inline constexpr const char* kTestGenerations = "generations.test.jsonl";
inline constexpr const char* kDroppedQueries = "dropped_queries.jsonl";
inline constexpr const char* kAlignedPairs = "aligned_pairs.jsonl";
inline constexpr const char* kTriplets = "triplets.jsonl";
inline constexpr const char* kAdapter = "adapter.json";
inline constexpr const char* kLossLog = "loss_log.csv";
inline constexpr const char* kBm25Index = "bm25_index.json";
inline constexpr const char* kDenseIndex = "dense_index.json";
inline constexpr const char* kPrefusionRun = "run.prefusion.jsonl";
inline constexpr const char* kFusedRun = "run.fused.jsonl";
inline constexpr const char* kFusionWarnings = "fusion_warnings.jsonl";
inline constexpr const char* kEvalReport = "eval_report.json";
inline constexpr const char* kEvalTable = "eval_table.txt";
inline constexpr const char* kResolvedConfig = "resolved_config.json";
} // namespace artifact

namespace detail {

inline ToolCollection load_prepared_tools(const PipelineConfig& config) {
    auto path = config.out(artifact::kFilteredTools);
    if (!std::filesystem::exists(path)) {
        throw data_error("missing " + path.string() + "; run the prepare stage first");
    }
    return load_tools(path);
}

inline QueryCollection load_prepared_queries(const PipelineConfig& config) {
    auto path = config.out(artifact::kFilteredQueries);
    if (!std::filesystem::exists(path)) {
        throw data_error("missing " + path.string() + "; run the prepare stage first");
    }
    return load_queries(path);
}

inline QueryCollection load_training_queries(const PipelineConfig& config) {
    auto sampled = config.out(artifact::kSampledQueries);
    if (std::filesystem::exists(sampled)) return load_queries(sampled);
    return load_prepared_queries(config);
}

inline std::vector<GenerationRecord> load_generations(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw data_error("missing " + path.string() + "; run the hypothesize stage first");
    }
    std::vector<GenerationRecord> records;
    for (const auto& [line, value] : read_jsonl(path)) records.push_back(GenerationRecord::from_json(value));
    return records;
}

inline std::vector<RankedList> load_run(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw data_error("missing run file " + path.string());
    }
    std::vector<RankedList> run;
    for (const auto& [line, value] : read_jsonl(path)) run.push_back(RankedList::from_json(value));
    return run;
}

} // namespace detail

inline void write_resolved_config(const PipelineConfig& config) {
    std::filesystem::create_directories(config.output_dir);
    write_text_file(config.out(artifact::kResolvedConfig), config.to_json().dump(2) + "\n");
}

/// prepare: load, filter, persist the cleaned corpus and the report.
inline FiltrationReport cmd_prepare(const PipelineConfig& config) {
    std::filesystem::create_directories(config.output_dir);
    auto [tools, queries] = load_corpus(config.tools_path, config.queries_path);
    auto [kept_tools, kept_queries, report] = filter_dataset(tools, queries);
    save_tools(config.out(artifact::kFilteredTools), kept_tools);
    save_queries(config.out(artifact::kFilteredQueries), kept_queries);
    write_text_file(config.out(artifact::kFiltrationReport), report.to_json().dump(2) + "\n");
    return report;
}

/// hypothesize: render prompts and collect generation records for every
/// training (sampled) or test query. Per-query work may run in parallel;
/// records land in query-id order.
inline std::vector<GenerationRecord> cmd_hypothesize(const PipelineConfig& config, GenMode mode,
                                                     LlmProvider& provider) {
    PromptSet prompts = PromptSet::load(config.prompts_dir);
    QueryCollection queries = detail::load_prepared_queries(config);

    if (mode == GenMode::train && config.sample_n > 0) {
        queries = sample_training(queries, config.sample_n, config.seed);
        save_queries(config.out(artifact::kSampledQueries), queries);
    }

    std::size_t retries = (mode == GenMode::train) ? config.retries_train : config.retries_test;
    std::vector<GenerationRecord> records(queries.size());
    std::mutex error_mutex;
    std::exception_ptr first_error;
    parallel_for(queries.size(), config.workers, [&](std::size_t i) {
        try {
            records[i] = generate(queries.items()[i], provider, prompts, mode, retries);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    });
    if (first_error) std::rethrow_exception(first_error);

    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(r.to_json());
    write_jsonl(config.out(mode == GenMode::train ? artifact::kTrainGenerations : artifact::kTestGenerations),
                lines);

    if (mode == GenMode::train) {
        std::vector<json> dropped;
        for (const auto& r : records) {
            if (r.status != GenStatus::ok) {
                dropped.push_back(json{{"query_id", r.query_id}, {"status", to_string(r.status)}});
            }
        }
        write_jsonl(config.out(artifact::kDroppedQueries), dropped);
    }
    return records;
}

/// align: match each usable train-mode record's hypothetical tools to the
/// query's gold tools.
inline std::vector<AlignedPair> cmd_align(const PipelineConfig& config, const EmbeddingProvider& provider) {
    ToolCollection tools = detail::load_prepared_tools(config);
    QueryCollection queries = detail::load_training_queries(config);
    auto records = detail::load_generations(config.out(artifact::kTrainGenerations));

    std::vector<AlignedPair> all_pairs;
    for (const auto& record : records) {
        if (record.status != GenStatus::ok) continue;
        auto pairs = align(queries.at(record.query_id), record, tools, provider, config.alignment);
        all_pairs.insert(all_pairs.end(), pairs.begin(), pairs.end());
    }
    std::vector<json> lines;
    lines.reserve(all_pairs.size());
    for (const auto& p : all_pairs) lines.push_back(p.to_json());
    write_jsonl(config.out(artifact::kAlignedPairs), lines);
    return all_pairs;
}

/// train: the whole training phase. Generates hypothetical tools for the
/// training queries, aligns them, builds triplets, and fits the adapter.
/// Every intermediate is persisted.
inline AdapterModel cmd_train(const PipelineConfig& config, LlmProvider& llm,
                              const EmbeddingProvider& provider) {
    cmd_hypothesize(config, GenMode::train, llm);
    auto pairs = cmd_align(config, provider);

    ToolCollection tools = detail::load_prepared_tools(config);
    QueryCollection queries = detail::load_training_queries(config);
    auto triplets =
        build_triplets(pairs, queries, tools, config.style == VectorStyle::QTND ? VectorStyle::QTND
                                                                                : VectorStyle::TND,
                       config.train.k_negatives, config.train.seed);
    std::vector<json> lines;
    lines.reserve(triplets.size());
    for (const auto& t : triplets) lines.push_back(t.to_json());
    write_jsonl(config.out(artifact::kTriplets), lines);

    AdapterModel adapter;
    if (config.train.epochs == 0 || triplets.empty()) {
        adapter = AdapterModel::identity(provider.dim());
        adapter.config_echo = config.train.echo();
        save_loss_log(config.out(artifact::kLossLog), {});
    } else {
        TrainResult result = train(triplets, tools, provider, config.train);
        adapter = std::move(result.adapter);
        save_loss_log(config.out(artifact::kLossLog), result.step_losses);
    }
    adapter.save(config.out(artifact::kAdapter));
    return adapter;
}

/// index: persist the configured retriever's index for inspection or reuse.
inline void cmd_index(const PipelineConfig& config, const EmbeddingProvider& provider) {
    ToolCollection tools = detail::load_prepared_tools(config);
    if (config.retriever == RetrieverKind::bm25) {
        Bm25Index::build(tools, config.bm25).save(config.out(artifact::kBm25Index));
        return;
    }
    std::optional<AdapterModel> adapter;
    if (std::filesystem::exists(config.out(artifact::kAdapter))) {
        adapter = AdapterModel::load(config.out(artifact::kAdapter));
    }
    DenseIndex::build(tools, provider, adapter ? &*adapter : nullptr).save(config.out(artifact::kDenseIndex));
}

/// retrieve: per query, generate hypothetical tools (unless style Q), build
/// search vectors, collect a top-k list per vector, and fuse. Writes both the
/// pre-fusion and fused run files.
inline void cmd_retrieve(const PipelineConfig& config, LlmProvider* llm, const EmbeddingProvider& provider) {
    PromptSet prompts = PromptSet::load(config.prompts_dir);
    ToolCollection tools = detail::load_prepared_tools(config);
    QueryCollection queries = detail::load_prepared_queries(config);

    std::optional<AdapterModel> adapter;
    if (config.retriever == RetrieverKind::dense &&
        std::filesystem::exists(config.out(artifact::kAdapter))) {
        adapter = AdapterModel::load(config.out(artifact::kAdapter));
    }

    std::optional<Bm25Index> bm25_index;
    std::optional<DenseIndex> dense_index;
    if (config.retriever == RetrieverKind::bm25) {
        if (std::filesystem::exists(config.out(artifact::kBm25Index))) {
            bm25_index = Bm25Index::load(config.out(artifact::kBm25Index));
        } else {
            bm25_index = Bm25Index::build(tools, config.bm25);
        }
    } else {
        if (std::filesystem::exists(config.out(artifact::kDenseIndex))) {
            dense_index = DenseIndex::load(config.out(artifact::kDenseIndex), provider,
                                           adapter ? &*adapter : nullptr);
        } else {
            dense_index = DenseIndex::build(tools, provider, adapter ? &*adapter : nullptr);
        }
    }

    bool hypothesize = config.style != VectorStyle::Q;
    if (hypothesize && !llm) throw usage_error("styles TND/QTND need an llm provider at inference");
    GenMode mode = (config.prompt_mode == PromptMode::inferior) ? GenMode::inferior : GenMode::test;

    struct PerQuery {
        GenerationRecord record;
        std::vector<RankedList> lists;
        RankedList fused;
        std::string warning;
    };
    std::vector<PerQuery> results(queries.size());

    std::unique_ptr<LlmProvider> fusion_llm;
    std::mutex fusion_mutex;
    if (config.fusion == FusionKind::llm) fusion_llm = make_llm_provider(config, "fusion");

    std::mutex error_mutex;
    std::exception_ptr first_error;
    parallel_for(queries.size(), config.workers, [&](std::size_t i) {
        try {
            const Query& query = queries.items()[i];
            PerQuery& out = results[i];

            std::vector<SearchVector> vectors;
            if (hypothesize) {
                out.record = generate(query, *llm, prompts, mode, config.retries_test);
                vectors = build_search_vectors(query, out.record, config.style);
            } else {
                GenerationRecord untouched;
                untouched.query_id = query.id;
                untouched.mode = GenMode::test;
                vectors = build_search_vectors(query, untouched, VectorStyle::Q);
            }

            std::size_t ht_index = 0;
            for (const auto& vector : vectors) {
                RankedList list = (config.retriever == RetrieverKind::bm25)
                                      ? bm25_index->search(vector.text, config.k)
                                      : dense_index->search(vector.text, provider,
                                                            adapter ? &*adapter : nullptr, config.k);
                list.query_id = query.id;
                list.source_tag = (vector.style == VectorStyle::Q)
                                      ? "Q"
                                      : to_string(vector.style) + ":" + std::to_string(ht_index++);
                out.lists.push_back(std::move(list));
            }

            if (config.fusion == FusionKind::llm) {
                std::lock_guard<std::mutex> lock(fusion_mutex);
                LlmFuseResult fused = llm_fuse(query, out.lists, tools, *fusion_llm, prompts,
                                               config.rrf_k_const, config.k);
                out.fused = std::move(fused.list);
                out.warning = fused.warning;
            } else {
                out.fused = rrf(out.lists, config.rrf_k_const, config.k);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    });
    if (first_error) std::rethrow_exception(first_error);

    std::vector<json> generation_lines, prefusion_lines, fused_lines, warning_lines;
    for (const auto& r : results) {
        if (hypothesize) generation_lines.push_back(r.record.to_json());
        for (const auto& list : r.lists) prefusion_lines.push_back(list.to_json());
        fused_lines.push_back(r.fused.to_json());
        if (!r.warning.empty()) {
            warning_lines.push_back(json{{"query_id", r.fused.query_id}, {"warning", r.warning}});
        }
    }
    if (hypothesize) write_jsonl(config.out(artifact::kTestGenerations), generation_lines);
    write_jsonl(config.out(artifact::kPrefusionRun), prefusion_lines);
    write_jsonl(config.out(artifact::kFusedRun), fused_lines);
    if (config.fusion == FusionKind::llm) write_jsonl(config.out(artifact::kFusionWarnings), warning_lines);
}

/// fuse: re-fuse an existing pre-fusion run file (ablation hook: swap rrf and
/// llm fusion without re-retrieving).
inline void cmd_fuse(const PipelineConfig& config) {
    QueryCollection queries = detail::load_prepared_queries(config);
    ToolCollection tools = detail::load_prepared_tools(config);
    auto prefusion = detail::load_run(config.out(artifact::kPrefusionRun));

    std::map<std::string, std::vector<RankedList>> by_query;
    for (auto& list : prefusion) by_query[list.query_id].push_back(std::move(list));

    std::unique_ptr<LlmProvider> fusion_llm;
    PromptSet prompts;
    if (config.fusion == FusionKind::llm) {
        fusion_llm = make_llm_provider(config, "fusion");
        prompts = PromptSet::load(config.prompts_dir);
    }

    std::vector<json> fused_lines, warning_lines;
    for (const auto& [query_id, lists] : by_query) {
        if (config.fusion == FusionKind::llm) {
            LlmFuseResult fused = llm_fuse(queries.at(query_id), lists, tools, *fusion_llm, prompts,
                                           config.rrf_k_const, config.k);
            fused_lines.push_back(fused.list.to_json());
            if (!fused.warning.empty()) {
                warning_lines.push_back(json{{"query_id", query_id}, {"warning", fused.warning}});
            }
        } else {
            fused_lines.push_back(rrf(lists, config.rrf_k_const, config.k).to_json());
        }
    }
    write_jsonl(config.out(artifact::kFusedRun), fused_lines);
    if (config.fusion == FusionKind::llm) write_jsonl(config.out(artifact::kFusionWarnings), warning_lines);
}

/// evaluate: metrics over the fused run, with run metadata echoed into the
/// report.
inline EvalReport cmd_evaluate(const PipelineConfig& config, const EmbeddingProvider& provider) {
    QueryCollection queries = detail::load_prepared_queries(config);
    auto run = detail::load_run(config.out(artifact::kFusedRun));

    std::string adapter_fp;
    if (std::filesystem::exists(config.out(artifact::kAdapter))) {
        adapter_fp = AdapterModel::load(config.out(artifact::kAdapter)).fingerprint();
    }
    json metadata{{"retriever", to_string(config.retriever)},
                  {"style", to_string(config.style)},
                  {"alignment", to_string(config.alignment)},
                  {"fusion", to_string(config.fusion)},
                  {"prompt_mode", to_string(config.prompt_mode)},
                  {"seed", config.seed},
                  {"train_seed", config.train.seed},
                  {"k_negatives", config.train.k_negatives},
                  {"provider_fingerprint", provider.fingerprint()},
                  {"adapter_fingerprint", adapter_fp}};

    EvalReport report = evaluate_run(run, queries, config.k, metadata);
    write_text_file(config.out(artifact::kEvalReport), report.to_json().dump(2) + "\n");
    std::string label = to_string(config.retriever) + "/" + to_string(config.style);
    write_text_file(config.out(artifact::kEvalTable), format_report_table(report, label));
    return report;
}

/// run-all: prepare, train (when enabled, dense retriever only), retrieve,
/// evaluate.
inline EvalReport run_all(const PipelineConfig& config) {
    write_resolved_config(config);
    auto provider = make_embedding_provider(config);
    cmd_prepare(config);

    std::unique_ptr<LlmProvider> llm;
    if (!config.llm.kind.empty()) llm = make_llm_provider(config, "generation");

    if (config.train_enabled && config.retriever == RetrieverKind::dense) {
        if (!llm) throw usage_error("training the adapter needs an llm provider");
        cmd_train(config, *llm, *provider);
    }
    cmd_retrieve(config, llm.get(), *provider);
    return cmd_evaluate(config, *provider);
}

} // namespace tooldreamer
