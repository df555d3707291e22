#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <unistd.h>

#include "xlaug/rng.hpp"
#include "xlaug/wikiscrap.hpp"

using namespace xlaug;
using namespace xlaug::wikiscrap;

namespace {

// Independent oracle: build the full N x N damped transition matrix (with
// uniform teleport and uniform dangling redistribution) and power-iterate it
// to 1e-12. Deliberately structured nothing like the production code.
std::vector<double> dense_pagerank_oracle(std::size_t n,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                          double damping) {
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    std::vector<std::size_t> outdeg(n, 0);
    std::vector<std::vector<bool>> has(n, std::vector<bool>(n, false));
    for (auto [s, d] : edges) {
        if (s == d || has[s][d]) continue;
        has[s][d] = true;
        ++outdeg[s];
    }
    for (std::size_t s = 0; s < n; ++s) {
        if (outdeg[s] == 0) {
            for (std::size_t d = 0; d < n; ++d) m[d][s] = 1.0 / static_cast<double>(n);
        } else {
            for (std::size_t d = 0; d < n; ++d)
                if (has[s][d]) m[d][s] = 1.0 / static_cast<double>(outdeg[s]);
        }
    }
    std::vector<double> r(n, 1.0 / static_cast<double>(n)), next(n);
    for (int iter = 0; iter < 100000; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += m[i][j] * r[j];
            next[i] = (1.0 - damping) / static_cast<double>(n) + damping * acc;
        }
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) delta += std::abs(next[i] - r[i]);
        r = next;
        if (delta < 1e-14) break;
    }
    return r;
}

ArticleGraph graph_from_edges(std::size_t n,
                              const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    ArticleGraph g;
    for (std::size_t i = 0; i < n; ++i) g.add_node("n" + std::to_string(i));
    for (auto [s, d] : edges) g.add_edge("n" + std::to_string(s), "n" + std::to_string(d));
    return g;
}

Article make_article(std::string id, std::vector<std::size_t> paragraph_lengths) {
    Article a;
    a.id = std::move(id);
    a.language = lang("en");
    a.title = "T " + a.id;
    for (std::size_t len : paragraph_lengths) a.paragraphs.push_back(std::string(len, 'x'));
    return a;
}

}  // namespace

TEST_CASE("single node and symmetric two-node fixed points") {
    ScrapConfig cfg;
    ArticleGraph one;
    one.add_node("a");
    const auto r1 = pagerank(one, cfg);
    REQUIRE(r1.ranks.size() == 1);
    CHECK(std::abs(r1.ranks[0] - 1.0) < 1e-12);

    ArticleGraph two;
    two.add_edge("a", "b");
    two.add_edge("b", "a");
    const auto r2 = pagerank(two, cfg);
    CHECK(std::abs(r2.ranks[0] - 0.5) < 1e-9);
    CHECK(std::abs(r2.ranks[1] - 0.5) < 1e-9);
}

TEST_CASE("three-node worked example") {
    ScrapConfig cfg;
    const auto g = graph_from_edges(3, {{0, 1}, {0, 2}, {1, 2}, {2, 0}});
    const auto res = pagerank(g, cfg);
    REQUIRE(res.converged);
    CHECK(std::abs(res.ranks[0] - 0.3878) < 1e-4);
    CHECK(std::abs(res.ranks[1] - 0.2148) < 1e-4);
    CHECK(std::abs(res.ranks[2] - 0.3974) < 1e-4);
}

TEST_CASE("matches the dense oracle on random small graphs") {
    Rng rng(11);
    ScrapConfig cfg;
    cfg.tolerance = 1e-13;
    cfg.max_iterations = 100000;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(8);
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        const std::size_t m = rng.below(n * n + 1);
        for (std::size_t e = 0; e < m; ++e) edges.emplace_back(rng.below(n), rng.below(n));

        const auto got = pagerank(graph_from_edges(n, edges), cfg);
        const auto want = dense_pagerank_oracle(n, edges, cfg.damping);
        REQUIRE(got.ranks.size() == n);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(got.ranks[i] - want[i]) < 1e-8);
            CHECK(got.ranks[i] >= 0.0);
            sum += got.ranks[i];
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("rank vector is permutation-equivariant") {
    Rng rng(21);
    ScrapConfig cfg;
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 2 + rng.below(7);
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        const std::size_t m = rng.below(2 * n + 1);
        for (std::size_t e = 0; e < m; ++e) edges.emplace_back(rng.below(n), rng.below(n));

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);

        std::vector<std::pair<std::size_t, std::size_t>> mapped;
        for (auto [s, d] : edges) mapped.emplace_back(perm[s], perm[d]);

        const auto base = pagerank(graph_from_edges(n, edges), cfg);
        const auto moved = pagerank(graph_from_edges(n, mapped), cfg);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(std::abs(base.ranks[i] - moved.ranks[perm[i]]) < 1e-9);
    }
}

TEST_CASE("empty graph is an error; disconnected dangling nodes converge") {
    ScrapConfig cfg;
    ArticleGraph empty;
    CHECK_THROWS_AS(pagerank(empty, cfg), ValidationError);

    ArticleGraph dangling;
    dangling.add_node("a");
    dangling.add_node("b");
    dangling.add_node("c");
    const auto res = pagerank(dangling, cfg);
    REQUIRE(res.converged);
    for (double r : res.ranks) CHECK(std::abs(r - 1.0 / 3.0) < 1e-9);
}

TEST_CASE("select_top sorts by rank with ascending-index ties") {
    CHECK(select_top({0.5, 0.3, 0.2}, 2) == std::vector<std::size_t>{0, 1});
    CHECK(select_top({0.2, 0.2, 0.2}, 1) == std::vector<std::size_t>{0});
    CHECK(select_top({0.1, 0.9}, 0).empty());
    CHECK(select_top({0.1, 0.9}, 10) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("paragraph filter keeps the inclusive [500, 1500] interval") {
    ScrapConfig cfg;
    const Article a = make_article("a1", {499, 500, 1000, 1500, 1501, 700, 800, 900});
    const auto outcome = filter_article(a, cfg);
    const auto* kept = std::get_if<Article>(&outcome);
    REQUIRE(kept != nullptr);
    // 499 and 1501 dropped; six survive.
    REQUIRE(kept->paragraphs.size() == 6);
    CHECK(kept->paragraphs[0].size() == 500);
    CHECK(kept->paragraphs[3].size() == 700);

    // Filtering a kept article again changes nothing.
    const auto again = filter_article(*kept, cfg);
    REQUIRE(std::holds_alternative<Article>(again));
    CHECK(std::get<Article>(again) == *kept);
}

TEST_CASE("articles with fewer than five surviving paragraphs are rejected") {
    ScrapConfig cfg;
    const Article a = make_article("a2", {600, 600, 600, 600, 20, 3000});
    const auto outcome = filter_article(a, cfg);
    const auto* rejected = std::get_if<Rejection>(&outcome);
    REQUIRE(rejected != nullptr);
    CHECK(rejected->reason == "min_paragraphs");
    CHECK(rejected->surviving_paragraphs == 4);
}

TEST_CASE("scalar length governs the bounds, not byte length") {
    ScrapConfig cfg;
    Article a;
    a.id = "zh";
    a.language = lang("zh");
    a.title = "中";
    // 600 CJK scalars (1800 UTF-8 bytes) must pass the [500,1500] filter.
    std::string para;
    for (int i = 0; i < 600; ++i) para += "马";
    a.paragraphs.assign(5, para);
    const auto outcome = filter_article(a, cfg);
    REQUIRE(std::holds_alternative<Article>(outcome));
    CHECK(std::get<Article>(outcome).paragraphs.size() == 5);
}

TEST_CASE("sampling clamps, preserves order, and is seed-stable") {
    std::vector<Article> pool;
    for (int i = 0; i < 20; ++i) pool.push_back(make_article("p" + std::to_string(i), {600}));

    const auto all = sample_articles(pool, 50, 9);
    CHECK(all.size() == 20);

    const auto a = sample_articles(pool, 7, 1234);
    const auto b = sample_articles(pool, 7, 1234);
    REQUIRE(a.size() == 7);
    CHECK(a == b);

    // Output preserves the pool's relative order.
    std::vector<std::string> ids;
    for (const auto& art : a) ids.push_back(art.id);
    auto sorted_by_pool = ids;
    std::stable_sort(sorted_by_pool.begin(), sorted_by_pool.end(),
                     [](const std::string& x, const std::string& y) {
                         return std::stoi(x.substr(1)) < std::stoi(y.substr(1));
                     });
    CHECK(ids == sorted_by_pool);
}

TEST_CASE("different seeds give different subsets over a large pool") {
    std::vector<Article> pool;
    for (int i = 0; i < 2000; ++i) pool.push_back(make_article("q" + std::to_string(i), {600}));
    const auto a = sample_articles(pool, 500, 1);
    const auto b = sample_articles(pool, 500, 2);
    REQUIRE(a.size() == 500);
    REQUIRE(b.size() == 500);
    std::set<std::string> ids_a, ids_b;
    for (const auto& art : a) ids_a.insert(art.id);
    for (const auto& art : b) ids_b.insert(art.id);
    CHECK(ids_a.size() == 500);
    CHECK(ids_a != ids_b);
}

TEST_CASE("edge-list files load with comments, isolated nodes, and CRLF") {
    const auto path = std::filesystem::temp_directory_path() /
                      ("xlaug_edges_" + std::to_string(::getpid()) + ".tsv");
    {
        std::ofstream out(path, std::ios::binary);
        out << "# comment\n";
        out << "a\tb\r\n";
        out << "b\tc\n";
        out << "lonely\n";
        out << "a\tb\n";   // duplicate, dropped
        out << "c\tc\n";   // self-loop, dropped
    }
    const auto g = load_edge_list(path.string());
    std::filesystem::remove(path);
    REQUIRE(g.size() == 4);
    CHECK(g.out_links(*g.index_of("a")).size() == 1);
    CHECK(g.out_links(*g.index_of("c")).empty());
    CHECK(g.out_links(*g.index_of("lonely")).empty());
}

TEST_CASE("run_scrap composes filter and sample") {
    ScrapConfig cfg;
    cfg.articles_per_language = 3;
    cfg.seed = 42;
    std::vector<Article> pool;
    for (int i = 0; i < 8; ++i) pool.push_back(make_article("k" + std::to_string(i), {600, 600, 600, 600, 600}));
    pool.push_back(make_article("reject", {600, 600, 100, 100, 100}));

    const auto report = run_scrap(pool, cfg);
    CHECK(report.considered == 9);
    CHECK(report.rejected == 1);
    REQUIRE(report.selected.size() == 3);
    for (const auto& a : report.selected) CHECK(a.id != "reject");

    const auto again = run_scrap(pool, cfg);
    CHECK(again.selected == report.selected);
}

TEST_CASE("articles round-trip through JSONL") {
    std::vector<Article> arts = {make_article("r1", {600}), make_article("r2", {700, 800})};
    arts[1].language = lang("zh");
    arts[1].paragraphs[0] = "中文段落内容";
    const auto path = std::filesystem::temp_directory_path() /
                      ("xlaug_articles_" + std::to_string(::getpid()) + ".jsonl");
    save_articles_jsonl(arts, path.string());
    const auto back = load_articles_jsonl(path.string());
    std::filesystem::remove(path);
    CHECK(back == arts);
}
