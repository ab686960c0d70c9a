#include <catch2/catch_amalgamated.hpp>

#include "tooldreamer/fusion.hpp"
#include "test_util.hpp"

using namespace tooldreamer;

namespace {

RankedList list_of(const std::string& query_id, const std::vector<std::string>& ids) {
    RankedList list;
    list.query_id = query_id;
    list.source_tag = "test";
    double score = 1.0;
    for (const auto& id : ids) {
        list.items.push_back({id, score});
        score -= 0.01;
    }
    return list;
}

} // namespace

TEST_CASE("rrf on a single list preserves its order") {
    auto fused = rrf({list_of("q", {"a", "b", "c"})}, 60.0, 10);
    REQUIRE(fused.items.size() == 3);
    REQUIRE(fused.items[0].tool_id == "a");
    REQUIRE(fused.items[1].tool_id == "b");
    REQUIRE(fused.items[2].tool_id == "c");
}

TEST_CASE("rrf worked example: [A,B] + [B,C] fuses to [B,A,C]") {
    auto fused = rrf({list_of("q", {"A", "B"}), list_of("q", {"B", "C"})}, 60.0, 10);
    REQUIRE(fused.items.size() == 3);
    REQUIRE(fused.items[0].tool_id == "B");
    REQUIRE(fused.items[1].tool_id == "A");
    REQUIRE(fused.items[2].tool_id == "C");
    REQUIRE(fused.items[0].score == Catch::Approx(1.0 / 62 + 1.0 / 61).margin(1e-12));
    REQUIRE(fused.items[1].score == Catch::Approx(1.0 / 61).margin(1e-12));
    REQUIRE(fused.items[2].score == Catch::Approx(1.0 / 62).margin(1e-12));
}

TEST_CASE("rrf exact ties break by ascending tool id") {
    auto fused = rrf({list_of("q", {"a", "b"}), list_of("q", {"b", "a"})}, 60.0, 10);
    REQUIRE(fused.items[0].score == fused.items[1].score);
    REQUIRE(fused.items[0].tool_id == "a");
    REQUIRE(fused.items[1].tool_id == "b");
}

TEST_CASE("rrf output only contains ids from its inputs and respects top_k") {
    auto fused = rrf({list_of("q", {"a", "b", "c", "d"}), list_of("q", {"c", "e"})}, 60.0, 3);
    REQUIRE(fused.items.size() == 3);
    for (const auto& item : fused.items) {
        REQUIRE(std::string("abcde").find(item.tool_id) != std::string::npos);
    }
}

TEST_CASE("a unanimous winner stays first") {
    auto fused = rrf({list_of("q", {"win", "x", "y"}), list_of("q", {"win", "y"}),
                      list_of("q", {"win", "z"})},
                     60.0, 10);
    REQUIRE(fused.items[0].tool_id == "win");
}

TEST_CASE("rrf is invariant to the order of its input lists") {
    auto a = rrf({list_of("q", {"a", "b"}), list_of("q", {"c", "a"})}, 60.0, 10);
    auto b = rrf({list_of("q", {"c", "a"}), list_of("q", {"a", "b"})}, 60.0, 10);
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        REQUIRE(a.items[i].tool_id == b.items[i].tool_id);
        REQUIRE(a.items[i].score == b.items[i].score);
    }
}

TEST_CASE("identical input lists keep their order for any k_const") {
    for (double k_const : {5.0, 20.0, 60.0, 200.0}) {
        auto fused = rrf({list_of("q", {"a", "b", "c"}), list_of("q", {"a", "b", "c"})}, k_const, 10);
        REQUIRE(fused.items[0].tool_id == "a");
        REQUIRE(fused.items[1].tool_id == "b");
        REQUIRE(fused.items[2].tool_id == "c");
    }
}

TEST_CASE("rrf rejects empty input and mixed query ids") {
    REQUIRE_THROWS_AS(rrf({}, 60.0, 10), Error);
    REQUIRE_THROWS_AS(rrf({list_of("q1", {"a"}), list_of("q2", {"b"})}, 60.0, 10), Error);
}

namespace {

struct FusionFixture {
    ToolCollection tools;
    Query query;
    std::vector<RankedList> lists;
    PromptSet prompts;

    FusionFixture() {
        std::vector<Tool> ts;
        for (int i = 0; i < 14; ++i) {
            ts.push_back(tdtest::make_tool("t" + std::to_string(i), "name" + std::to_string(i),
                                           "description " + std::to_string(i)));
        }
        tools = ToolCollection(ts);
        query = tdtest::make_query("q1", "which tool?", {"t0"}, {"t9"});
        std::vector<std::string> first, second;
        for (int i = 0; i < 7; ++i) first.push_back("t" + std::to_string(i));
        for (int i = 5; i < 12; ++i) second.push_back("t" + std::to_string(i));
        lists = {list_of("q1", first), list_of("q1", second)};
        prompts = PromptSet::load(tdtest::prompts_dir());
    }

    std::string block(int i, double score) {
        return "Tool: name" + std::to_string(i) + "\nScore: " + std::to_string(score) + "\n";
    }
};

} // namespace

TEST_CASE("llm_fuse keeps well-formed rankings as given") {
    FusionFixture fx;
    std::string response = "Reasoning summary first.\n";
    for (int i = 0; i < 10; ++i) response += fx.block(i, 1.0 - 0.05 * i);
    MockLlmProvider mock(MockResponses{{"q1", {response}}});

    auto result = llm_fuse(fx.query, fx.lists, fx.tools, mock, fx.prompts, 60.0, 10);
    REQUIRE(!result.fell_back);
    REQUIRE(result.list.items.size() == 10);
    for (int i = 0; i < 10; ++i) {
        REQUIRE(result.list.items[i].tool_id == "t" + std::to_string(i));
    }
    REQUIRE(result.list.items[0].score == Catch::Approx(1.0));
}

TEST_CASE("llm_fuse truncates over-reported lists to top_k") {
    FusionFixture fx;
    std::string response;
    for (int i = 0; i < 12; ++i) response += fx.block(i, 1.0 - 0.05 * i);
    MockLlmProvider mock(MockResponses{{"q1", {response}}});
    auto result = llm_fuse(fx.query, fx.lists, fx.tools, mock, fx.prompts, 60.0, 10);
    REQUIRE(result.list.items.size() == 10);
    REQUIRE(result.list.items.back().tool_id == "t9");
}

TEST_CASE("llm_fuse drops hallucinated names and backfills from the RRF order") {
    FusionFixture fx;
    std::string response = fx.block(0, 0.9) + "Tool: totally_made_up\nScore: 0.85\n" + fx.block(2, 0.8);
    MockLlmProvider mock(MockResponses{{"q1", {response}}});
    auto result = llm_fuse(fx.query, fx.lists, fx.tools, mock, fx.prompts, 60.0, 10);
    REQUIRE(result.list.items.size() == 10);
    REQUIRE(result.list.items[0].tool_id == "t0");
    REQUIRE(result.list.items[1].tool_id == "t2");
    for (const auto& item : result.list.items) {
        REQUIRE(item.tool_id != "totally_made_up");
        REQUIRE(fx.tools.find(item.tool_id) != nullptr);
    }
    // Backfill follows the RRF ranking over the candidate union.
    auto rrf_order = rrf(fx.lists, 60.0, 20);
    std::vector<std::string> expected;
    expected.push_back("t0");
    expected.push_back("t2");
    for (const auto& item : rrf_order.items) {
        if (item.tool_id != "t0" && item.tool_id != "t2" && expected.size() < 10) {
            expected.push_back(item.tool_id);
        }
    }
    for (std::size_t i = 0; i < 10; ++i) REQUIRE(result.list.items[i].tool_id == expected[i]);
}

TEST_CASE("llm_fuse falls back to rrf when the provider fails") {
    FusionFixture fx;
    MockLlmProvider mock(MockResponses{}); // no responses: provider error
    auto result = llm_fuse(fx.query, fx.lists, fx.tools, mock, fx.prompts, 60.0, 10);
    REQUIRE(result.fell_back);
    REQUIRE(!result.warning.empty());
    auto expected = rrf(fx.lists, 60.0, 10);
    REQUIRE(result.list.items.size() == expected.items.size());
    for (std::size_t i = 0; i < expected.items.size(); ++i) {
        REQUIRE(result.list.items[i].tool_id == expected.items[i].tool_id);
    }
}

TEST_CASE("llm_fuse scores never increase down the list") {
    FusionFixture fx;
    std::string response = fx.block(3, 0.4) + fx.block(1, 0.9) + fx.block(0, 0.2);
    MockLlmProvider mock(MockResponses{{"q1", {response}}});
    auto result = llm_fuse(fx.query, fx.lists, fx.tools, mock, fx.prompts, 60.0, 10);
    for (std::size_t i = 1; i < result.list.items.size(); ++i) {
        REQUIRE(result.list.items[i - 1].score >= result.list.items[i].score);
    }
    // Order still follows the given ranking.
    REQUIRE(result.list.items[0].tool_id == "t3");
    REQUIRE(result.list.items[1].tool_id == "t1");
    REQUIRE(result.list.items[2].tool_id == "t0");
}
