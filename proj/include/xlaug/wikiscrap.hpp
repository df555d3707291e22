#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "xlaug/corpus.hpp"
#include "xlaug/errors.hpp"
#include "xlaug/lang.hpp"
#include "xlaug/rng.hpp"
#include "xlaug/unicode.hpp"

namespace xlaug {

struct Article {
    std::string id;
    LanguageCode language;
    std::string title;
    std::vector<std::string> paragraphs;

    bool operator==(const Article&) const = default;
};

}  // namespace xlaug

namespace xlaug::wikiscrap {

// Dense node indexing with an id <-> index map; adjacency lists hold out-links.
class ArticleGraph {
  public:
    std::size_t add_node(const std::string& id) {
        auto [it, inserted] = index_.emplace(id, ids_.size());
        if (inserted) {
            ids_.push_back(id);
            adj_.emplace_back();
        }
        return it->second;
    }

    // Self-loops and repeated edges are dropped on insertion.
    void add_edge(const std::string& src, const std::string& dst) {
        const std::size_t s = add_node(src);
        const std::size_t d = add_node(dst);
        if (s == d) return;
        auto& out = adj_[s];
        if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
    }

    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<std::size_t>& out_links(std::size_t node) const { return adj_[node]; }

    std::optional<std::size_t> index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

  private:
    std::vector<std::string> ids_;
    std::vector<std::vector<std::size_t>> adj_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Edge-list text file: `src_id<TAB>dst_id`, one edge per line. Blank lines
// and lines starting with '#' are skipped. A line with no tab declares an
// isolated node.
inline ArticleGraph load_edge_list(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    ArticleGraph g;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            g.add_node(line);
            continue;
        }
        const std::string src = line.substr(0, tab);
        const std::string dst = line.substr(tab + 1);
        if (src.empty() || dst.empty())
            throw ParseError("malformed edge at " + path + ":" + std::to_string(lineno));
        g.add_edge(src, dst);
    }
    return g;
}

struct ScrapConfig {
    std::size_t top_k = 10000;
    std::size_t min_chars = 500;
    std::size_t max_chars = 1500;
    std::size_t min_paragraphs = 5;
    std::size_t articles_per_language = 500;
    double damping = 0.85;
    double tolerance = 1e-9;
    std::size_t max_iterations = 200;
    std::uint64_t seed = 0;

    void validate() const {
        if (min_chars == 0 || min_chars > max_chars)
            throw ValidationError("require 0 < min_chars <= max_chars");
        if (!(damping > 0.0 && damping < 1.0)) throw ValidationError("damping must be in (0,1)");
    }
};

struct PageRankResult {
    std::vector<double> ranks;
    bool converged = false;
    std::size_t iterations = 0;
};

// Damped PageRank with uniform teleport; dangling mass is redistributed
// uniformly over all nodes. Accumulation order is fixed (node-index order)
// so results are identical across runs.
inline PageRankResult pagerank(const ArticleGraph& graph, const ScrapConfig& config) {
    config.validate();
    const std::size_t n = graph.size();
    if (n == 0) throw ValidationError("pagerank requires a non-empty graph");

    const double d = config.damping;
    const double uniform = 1.0 / static_cast<double>(n);
    std::vector<double> rank(n, uniform), next(n, 0.0);

    PageRankResult result;
    for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        double dangling = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
            const auto& out = graph.out_links(u);
            if (out.empty()) {
                dangling += rank[u];
                continue;
            }
            const double share = rank[u] / static_cast<double>(out.size());
            for (std::size_t v : out) next[v] += share;
        }
        const double base = (1.0 - d) * uniform + d * dangling * uniform;
        double delta = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            next[v] = base + d * next[v];
            delta += std::abs(next[v] - rank[v]);
        }
        rank.swap(next);
        result.iterations = iter + 1;
        if (delta < config.tolerance) {
            result.converged = true;
            break;
        }
    }
    result.ranks = std::move(rank);
    return result;
}

// Indices of the k largest ranks; ties broken by ascending node index.
inline std::vector<std::size_t> select_top(const std::vector<double>& ranks, std::size_t k) {
    std::vector<std::size_t> order(ranks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ranks[a] > ranks[b]; });
    if (k < order.size()) order.resize(k);
    return order;
}

struct Rejection {
    std::string reason;  // "min_paragraphs"
    std::size_t surviving_paragraphs = 0;
};

using FilterOutcome = std::variant<Article, Rejection>;

// Drops paragraphs whose Unicode-scalar length falls outside the inclusive
// [min_chars, max_chars] interval, then rejects the article if fewer than
// min_paragraphs survive.
inline FilterOutcome filter_article(const Article& article, const ScrapConfig& config) {
    config.validate();
    Article kept = article;
    kept.paragraphs.clear();
    for (const auto& p : article.paragraphs) {
        const std::size_t len = unicode::scalar_length(p);
        if (len >= config.min_chars && len <= config.max_chars) kept.paragraphs.push_back(p);
    }
    if (kept.paragraphs.size() < config.min_paragraphs)
        return Rejection{"min_paragraphs", kept.paragraphs.size()};
    return kept;
}

// Uniform sample without replacement of min(n, |kept|) articles, deterministic
// for a fixed seed; output preserves the input's relative order.
inline std::vector<Article> sample_articles(const std::vector<Article>& kept, std::size_t n,
                                            std::uint64_t seed) {
    Rng rng(seed);
    const auto picks = rng.sample_indices(kept.size(), std::min(n, kept.size()));
    std::vector<Article> out;
    out.reserve(picks.size());
    for (std::size_t i : picks) out.push_back(kept[i]);
    return out;
}

inline nlohmann::json article_to_json(const Article& a) {
    return nlohmann::json{{"id", a.id},
                          {"language", a.language.str()},
                          {"title", a.title},
                          {"paragraphs", a.paragraphs}};
}

inline Article article_from_json(const nlohmann::json& j) {
    Article a;
    a.id = j.at("id").get<std::string>();
    a.language = lang(j.at("language").get<std::string>());
    a.title = j.at("title").get<std::string>();
    a.paragraphs = j.at("paragraphs").get<std::vector<std::string>>();
    return a;
}

inline void save_articles_jsonl(const std::vector<Article>& articles, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& a : articles) out << article_to_json(a).dump() << "\n";
    if (!out) throw IoError("failed writing " + path);
}

inline std::vector<Article> load_articles_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<Article> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(article_from_json(corpus::detail::parse_json_text(line, path)));
    }
    return out;
}

struct ScrapReport {
    std::vector<Article> selected;
    std::size_t considered = 0;
    std::size_t rejected = 0;
};

// Full protocol for one language's article pool: filter each article, then
// seed-sample articles_per_language from the survivors.
inline ScrapReport run_scrap(const std::vector<Article>& pool, const ScrapConfig& config) {
    config.validate();
    ScrapReport report;
    report.considered = pool.size();
    std::vector<Article> kept;
    for (const auto& a : pool) {
        FilterOutcome outcome = filter_article(a, config);
        if (auto* ok = std::get_if<Article>(&outcome))
            kept.push_back(std::move(*ok));
        else
            ++report.rejected;
    }
    report.selected = sample_articles(kept, config.articles_per_language, config.seed);
    return report;
}

}  // namespace xlaug::wikiscrap
