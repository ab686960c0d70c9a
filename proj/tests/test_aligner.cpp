#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "tooldreamer/aligner.hpp"
#include "test_util.hpp"

using namespace tooldreamer;
using tdtest::TempDir;

namespace {

SimilarityMatrix matrix_of(std::size_t n, std::vector<double> values) {
    SimilarityMatrix m;
    m.rows = m.cols = n;
    m.values = std::move(values);
    for (std::size_t c = 0; c < n; ++c) m.col_labels.push_back("g" + std::to_string(c));
    return m;
}

// Brute-force oracle: max total similarity over all row->col permutations.
double permutation_max(const SimilarityMatrix& sim) {
    std::vector<std::size_t> perm(sim.rows);
    std::iota(perm.begin(), perm.end(), 0);
    double best = -1e100;
    do {
        double total = 0.0;
        for (std::size_t r = 0; r < sim.rows; ++r) total += sim.at(r, perm[r]);
        best = std::max(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

SimilarityMatrix random_matrix(std::size_t n, std::mt19937_64& rng) {
    SimilarityMatrix m = matrix_of(n, std::vector<double>(n * n));
    for (auto& v : m.values) v = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
    return m;
}

} // namespace

TEST_CASE("hungarian picks the dominant diagonal") {
    auto sim = matrix_of(2, {0.9, 0.1, 0.2, 0.8});
    auto assignment = hungarian_match(sim);
    REQUIRE(assignment == Assignment{{0, 0}, {1, 1}});
    REQUIRE(assignment_total(sim, assignment) == Catch::Approx(1.7).margin(1e-12));
}

TEST_CASE("hungarian breaks full ties lexicographically") {
    auto sim = matrix_of(2, {0.5, 0.5, 0.5, 0.5});
    REQUIRE(hungarian_match(sim) == Assignment{{0, 0}, {1, 1}});

    auto sim3 = matrix_of(3, std::vector<double>(9, 0.25));
    REQUIRE(hungarian_match(sim3) == Assignment{{0, 0}, {1, 1}, {2, 2}});
}

TEST_CASE("hungarian equals the brute-force permutation maximum on random matrices") {
    std::mt19937_64 rng(2024);
    for (int iter = 0; iter < 40; ++iter) {
        std::size_t n = 2 + static_cast<std::size_t>(rng() % 6); // 2..7
        auto sim = random_matrix(n, rng);
        auto assignment = hungarian_match(sim);
        REQUIRE(assignment.size() == n);
        REQUIRE(assignment_total(sim, assignment) == permutation_max(sim));
    }
}

TEST_CASE("assignments are permutations") {
    std::mt19937_64 rng(99);
    auto sim = random_matrix(5, rng);
    for (auto method : {hungarian_match, greedy_match}) {
        auto assignment = method(sim);
        std::set<std::size_t> rows, cols;
        for (const auto& [r, c] : assignment) {
            rows.insert(r);
            cols.insert(c);
        }
        REQUIRE(rows.size() == 5);
        REQUIRE(cols.size() == 5);
    }
}

TEST_CASE("affine rescaling leaves the hungarian assignment unchanged") {
    std::mt19937_64 rng(7);
    auto sim = random_matrix(4, rng);
    auto baseline = hungarian_match(sim);

    SimilarityMatrix scaled = sim;
    for (auto& v : scaled.values) v = 0.37 * v + 0.21;
    REQUIRE(hungarian_match(scaled) == baseline);
}

TEST_CASE("greedy agrees with hungarian when there is no conflict") {
    auto sim = matrix_of(2, {0.9, 0.1, 0.2, 0.8});
    REQUIRE(greedy_match(sim) == hungarian_match(sim));
}

TEST_CASE("greedy gets trapped on the conflict fixture") {
    auto sim = matrix_of(2, {0.9, 0.8, 0.85, 0.1});
    auto greedy = greedy_match(sim);
    REQUIRE(greedy == Assignment{{0, 0}, {1, 1}});
    REQUIRE(assignment_total(sim, greedy) == Catch::Approx(1.0).margin(1e-12));

    auto optimal = hungarian_match(sim);
    REQUIRE(optimal == Assignment{{0, 1}, {1, 0}});
    REQUIRE(assignment_total(sim, optimal) == Catch::Approx(1.65).margin(1e-12));
}

TEST_CASE("greedy ties cascade into the identity assignment") {
    auto sim = matrix_of(3, std::vector<double>(9, 0.4));
    REQUIRE(greedy_match(sim) == Assignment{{0, 0}, {1, 1}, {2, 2}});
}

TEST_CASE("hungarian dominates greedy on every random matrix") {
    std::mt19937_64 rng(31337);
    for (int iter = 0; iter < 60; ++iter) {
        std::size_t n = 2 + static_cast<std::size_t>(rng() % 6);
        auto sim = random_matrix(n, rng);
        double h = assignment_total(sim, hungarian_match(sim));
        double g = assignment_total(sim, greedy_match(sim));
        REQUIRE(h >= g - 1e-12);
    }
}

TEST_CASE("rectangular matrices are padded and trimmed") {
    SimilarityMatrix sim;
    sim.rows = 2;
    sim.cols = 3;
    sim.values = {0.9, 0.1, 0.5, 0.2, 0.8, 0.3};
    sim.col_labels = {"g0", "g1", "g2"};
    auto assignment = hungarian_match(sim);
    REQUIRE(assignment.size() == 2);
    REQUIRE(assignment == Assignment{{0, 0}, {1, 1}});
}

TEST_CASE("similarity matrix entries are cosines of the rendered texts") {
    DeterministicProvider provider(32);
    std::vector<HypotheticalTool> hts = {{"t", "alpha_tool", "does alpha"}};
    std::vector<Tool> golds = {tdtest::make_tool("g0", "alpha", "the alpha tool")};
    auto sim = similarity_matrix(hts, golds, provider);
    REQUIRE(sim.rows == 1);
    REQUIRE(sim.cols == 1);
    double expected = cosine_similarity(provider.embed(tnd_text(hts[0])),
                                        provider.embed(golds[0].embed_text()));
    REQUIRE(sim.at(0, 0) == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("orthonormal file-backed store yields an identity-like matrix") {
    TempDir dir;
    std::vector<HypotheticalTool> hts = {{"a", "ht_one", "d1"}, {"b", "ht_two", "d2"}};
    std::vector<Tool> golds = {tdtest::make_tool("g0", "gold_one", "gd1"),
                               tdtest::make_tool("g1", "gold_two", "gd2")};
    std::vector<std::pair<std::string, EmbeddingVector>> entries = {
        {tnd_text(hts[0]), {1.0, 0.0}},
        {tnd_text(hts[1]), {0.0, 1.0}},
        {golds[0].embed_text(), {1.0, 0.0}},
        {golds[1].embed_text(), {0.0, 1.0}},
    };
    FileBackedProvider::save_store(dir.file("store.jsonl"), entries, 2);
    FileBackedProvider provider(dir.file("store.jsonl"));

    auto sim = similarity_matrix(hts, golds, provider);
    REQUIRE(sim.at(0, 0) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(sim.at(0, 1) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(sim.at(1, 0) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(sim.at(1, 1) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("identical texts on both sides give a diagonal of ones") {
    DeterministicProvider provider(24);
    // Craft a gold whose "name: description" rendering equals the HT's TND
    // rendering byte for byte, so the deterministic provider embeds the same
    // text on both sides.
    HypotheticalTool ht{" why", "n", "d"};
    Tool gold = tdtest::make_tool("g0", "Thoughts", "why Tool Name:n Tool Description:d");
    REQUIRE(tnd_text(ht) == gold.embed_text());

    auto sim = similarity_matrix({ht}, {gold}, provider);
    REQUIRE(sim.at(0, 0) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("align produces one pair per gold with matrix similarities") {
    TempDir dir;
    ToolCollection tools({tdtest::make_tool("g0", "gold_one", "gd1"),
                          tdtest::make_tool("g1", "gold_two", "gd2")});
    Query query = tdtest::make_query("q1", "text", {"g0", "g1"}, {"x"});

    GenerationRecord record;
    record.query_id = "q1";
    record.status = GenStatus::ok;
    record.tools = {{"a", "ht_one", "d1"}, {"b", "ht_two", "d2"}};

    // Vectors crafted so HT0 mirrors g1 and HT1 mirrors g0.
    std::vector<std::pair<std::string, EmbeddingVector>> entries = {
        {tnd_text(record.tools[0]), {0.0, 1.0}},
        {tnd_text(record.tools[1]), {1.0, 0.0}},
        {tools.at("g0").embed_text(), {1.0, 0.0}},
        {tools.at("g1").embed_text(), {0.0, 1.0}},
    };
    FileBackedProvider::save_store(dir.file("store.jsonl"), entries, 2);
    FileBackedProvider provider(dir.file("store.jsonl"));

    auto pairs = align(query, record, tools, provider, AlignMethod::hungarian);
    REQUIRE(pairs.size() == 2);
    REQUIRE(pairs[0].ht.name == "ht_one");
    REQUIRE(pairs[0].gold_tool_id == "g1");
    REQUIRE(pairs[1].ht.name == "ht_two");
    REQUIRE(pairs[1].gold_tool_id == "g0");
    REQUIRE(pairs[0].similarity == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("align with one candidate pairs it regardless of similarity") {
    DeterministicProvider provider(16);
    ToolCollection tools({tdtest::make_tool("g0", "gold", "gd")});
    Query query = tdtest::make_query("q1", "text", {"g0"}, {"x"});
    GenerationRecord record;
    record.query_id = "q1";
    record.status = GenStatus::ok;
    record.tools = {{"t", "whatever", "completely unrelated"}};
    auto pairs = align(query, record, tools, provider, AlignMethod::greedy);
    REQUIRE(pairs.size() == 1);
    REQUIRE(pairs[0].gold_tool_id == "g0");
    REQUIRE(pairs[0].method == "greedy");
}

TEST_CASE("align refuses non-ok records") {
    DeterministicProvider provider(16);
    ToolCollection tools({tdtest::make_tool("g0", "gold", "gd")});
    Query query = tdtest::make_query("q1", "text", {"g0"}, {"x"});
    GenerationRecord record;
    record.query_id = "q1";
    record.status = GenStatus::count_mismatch;
    REQUIRE_THROWS_AS(align(query, record, tools, provider, AlignMethod::hungarian), Error);
}
