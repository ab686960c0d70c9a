#include <exception>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "tooldreamer/pipeline.hpp"

namespace td = tooldreamer;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::string mode = "test"; // hypothesize only
    bool seed_set = false;
    std::uint64_t seed = 0;
    bool workers_set = false;
    std::size_t workers = 1;
};

td::PipelineConfig load_config(const GlobalOptions& opts) {
    if (opts.config_path.empty()) throw td::usage_error("--config is required");
    td::PipelineConfig config = td::load_pipeline_config(opts.config_path);
    if (opts.seed_set) config.seed = opts.seed;
    if (opts.workers_set) config.workers = opts.workers;
    return config;
}

int dispatch(const std::string& command, const GlobalOptions& opts) {
    td::PipelineConfig config = load_config(opts);
    td::write_resolved_config(config);
    auto embedding = td::make_embedding_provider(config);

    if (command == "prepare") {
        td::FiltrationReport report = td::cmd_prepare(config);
        std::cout << report.to_json().dump(2) << "\n";
    } else if (command == "index") {
        td::cmd_index(config, *embedding);
        std::cout << "index written\n";
    } else if (command == "hypothesize") {
        auto llm = td::make_llm_provider(config, "generation");
        td::GenMode mode = td::gen_mode_from_string(opts.mode);
        if (mode == td::GenMode::test && config.prompt_mode == td::PromptMode::inferior) {
            mode = td::GenMode::inferior;
        }
        auto records = td::cmd_hypothesize(config, mode, *llm);
        std::size_t ok = 0;
        for (const auto& r : records) {
            if (r.status == td::GenStatus::ok) ++ok;
        }
        std::cout << records.size() << " records (" << ok << " ok)\n";
    } else if (command == "align") {
        auto pairs = td::cmd_align(config, *embedding);
        std::cout << pairs.size() << " aligned pairs\n";
    } else if (command == "train") {
        auto llm = td::make_llm_provider(config, "generation");
        td::AdapterModel adapter = td::cmd_train(config, *llm, *embedding);
        std::cout << "adapter fingerprint " << adapter.fingerprint() << "\n";
    } else if (command == "retrieve") {
        std::unique_ptr<td::LlmProvider> llm;
        if (config.style != td::VectorStyle::Q) llm = td::make_llm_provider(config, "generation");
        td::cmd_retrieve(config, llm.get(), *embedding);
        std::cout << "run files written\n";
    } else if (command == "fuse") {
        td::cmd_fuse(config);
        std::cout << "fused run written\n";
    } else if (command == "evaluate") {
        td::EvalReport report = td::cmd_evaluate(config, *embedding);
        std::cout << td::format_report_table(report, td::to_string(config.retriever) + "/" +
                                                         td::to_string(config.style));
    } else if (command == "run-all") {
        td::EvalReport report = td::run_all(config);
        std::cout << td::format_report_table(report, td::to_string(config.retriever) + "/" +
                                                         td::to_string(config.style));
    } else {
        throw td::usage_error("unknown command: " + command);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tooldreamer: hypothetical-tool retrieval pipeline"};
    app.require_subcommand(1);

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "pipeline config file (JSON)")->required(false);
    auto* seed_opt = app.add_option("--seed", opts.seed, "override the config seed");
    auto* workers_opt = app.add_option("--workers", opts.workers, "override the config worker count");

    app.add_subcommand("prepare", "load, filter, and persist the corpus");
    app.add_subcommand("index", "build and persist the retriever index");
    auto* hyp = app.add_subcommand("hypothesize", "generate hypothetical tools");
    hyp->add_option("--mode", opts.mode, "train | test")->check(CLI::IsMember({"train", "test"}));
    app.add_subcommand("align", "align hypothetical tools with gold tools");
    app.add_subcommand("train", "full training phase: hypothesize, align, build triplets, fit adapter");
    app.add_subcommand("retrieve", "inference phase: search per vector and fuse");
    app.add_subcommand("fuse", "re-fuse an existing pre-fusion run");
    app.add_subcommand("evaluate", "compute metrics over the fused run");
    app.add_subcommand("run-all", "prepare, train, retrieve, evaluate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    opts.seed_set = seed_opt->count() > 0;
    opts.workers_set = workers_opt->count() > 0;

    try {
        return dispatch(app.get_subcommands()[0]->get_name(), opts);
    } catch (const td::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case td::ErrorKind::usage: return 1;
            case td::ErrorKind::data: return 2;
            case td::ErrorKind::provider: return 3;
        }
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
