#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "xlaug/corpus.hpp"
#include "xlaug/errors.hpp"
#include "xlaug/lang.hpp"
#include "xlaug/prompts.hpp"
#include "xlaug/rng.hpp"
#include "xlaug/unicode.hpp"
#include "xlaug/wikiscrap.hpp"

namespace xlaug::augment {

struct CandidateConfig {
    std::size_t per_paragraph = 3;
    std::size_t max_span_tokens = 5;
    std::uint64_t seed = 0;
    bool capitalized_spans = true;
    bool numbers = true;
    bool random_ngrams = true;
};

enum class SamplingVariant { all_languages, incremental_languages };

inline std::string to_string(SamplingVariant v) {
    return v == SamplingVariant::all_languages ? "all_languages" : "incremental_languages";
}

struct SamplingStrategy {
    SamplingVariant variant = SamplingVariant::all_languages;
    std::vector<LanguageCode> order;  // used by incremental_languages only
    std::vector<std::size_t> sizes;   // strictly ascending
    std::uint64_t seed = 0;

    void validate() const {
        for (std::size_t i = 1; i < sizes.size(); ++i)
            if (sizes[i] <= sizes[i - 1])
                throw ValidationError("sampling sizes must be strictly ascending");
        if (variant == SamplingVariant::incremental_languages && order.empty())
            throw ValidationError("incremental_languages requires a non-empty language order");
    }
};

// The four languages named for the progressive curve, then the remaining
// evaluation languages alphabetically.
inline std::vector<LanguageCode> default_incremental_order() {
    std::vector<LanguageCode> out = {lang("es"), lang("de"), lang("hi"), lang("ar")};
    std::vector<LanguageCode> rest;
    for (LanguageCode lc : mlqa_languages()) {
        if (lc == lang("en")) continue;  // source language, never a target bucket
        if (std::find(out.begin(), out.end(), lc) == out.end()) rest.push_back(lc);
    }
    std::sort(rest.begin(), rest.end());
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

namespace detail {

struct Token {
    std::size_t start = 0;   // scalar offset into the paragraph
    std::size_t length = 0;  // in scalars
    bool cjk = false;
};

// Offset-aware tokens: whitespace-separated words, except that CJK scalars
// form single-character tokens so caseless running text still yields local
// spans.
inline std::vector<Token> offset_tokens(const std::u32string& cps) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < cps.size()) {
        if (unicode::is_space(cps[i])) {
            ++i;
            continue;
        }
        if (unicode::is_cjk(cps[i])) {
            out.push_back({i, 1, true});
            ++i;
            continue;
        }
        const std::size_t start = i;
        while (i < cps.size() && !unicode::is_space(cps[i]) && !unicode::is_cjk(cps[i])) ++i;
        out.push_back({start, i - start, false});
    }
    return out;
}

// Shrinks a token to exclude leading/trailing punctuation. Returns false if
// nothing is left.
inline bool trim_punct(const std::u32string& cps, Token& t) {
    std::size_t lo = t.start, hi = t.start + t.length;
    while (lo < hi && unicode::is_punct(cps[lo])) ++lo;
    while (hi > lo && unicode::is_punct(cps[hi - 1])) --hi;
    if (lo == hi) return false;
    t.start = lo;
    t.length = hi - lo;
    return true;
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char b : s) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline constexpr std::uint64_t kCandidateSalt = 0xCA4Du;
inline constexpr std::uint64_t kCurveSalt = 0xC03Eu;

}  // namespace detail

// Answer-candidate heuristics over one paragraph. Spans are returned with
// exact scalar offsets, so the substring invariant holds by construction.
// Priority: capitalized spans, then numeric tokens, then seeded random
// n-grams; deduplicated by text; at most per_paragraph results.
inline std::vector<AnswerSpan> extract_answer_candidates(const std::string& paragraph,
                                                         LanguageCode language,
                                                         const CandidateConfig& cfg) {
    (void)language;  // heuristics are script-driven, not language-driven
    if (paragraph.empty()) throw ValidationError("candidate extraction requires a non-empty paragraph");
    if (cfg.per_paragraph == 0) return {};
    if (cfg.max_span_tokens == 0) throw ValidationError("max_span_tokens must be >= 1");

    const std::u32string cps = unicode::decode_utf8(paragraph);
    std::vector<detail::Token> raw = detail::offset_tokens(cps);
    std::vector<detail::Token> tokens;
    for (detail::Token t : raw)
        if (detail::trim_punct(cps, t)) tokens.push_back(t);
    if (tokens.empty()) return {};

    auto span_text = [&](std::size_t first, std::size_t count) {
        const detail::Token& a = tokens[first];
        const detail::Token& b = tokens[first + count - 1];
        const std::size_t lo = a.start;
        const std::size_t hi = b.start + b.length;
        return std::pair<std::string, std::size_t>(
            unicode::encode_utf8(std::u32string_view(cps).substr(lo, hi - lo)), lo);
    };

    std::vector<AnswerSpan> out;
    std::set<std::string> seen;
    auto push = [&](std::pair<std::string, std::size_t> span) {
        if (out.size() >= cfg.per_paragraph) return;
        if (!seen.insert(span.first).second) return;
        out.push_back(AnswerSpan{std::move(span.first), span.second});
    };

    if (cfg.capitalized_spans) {
        // Maximal runs of tokens whose first scalar is cased-uppercase.
        std::size_t i = 0;
        while (i < tokens.size()) {
            if (!unicode::is_upper(cps[tokens[i].start])) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < tokens.size() && j - i < cfg.max_span_tokens &&
                   unicode::is_upper(cps[tokens[j].start]))
                ++j;
            push(span_text(i, j - i));
            while (j < tokens.size() && unicode::is_upper(cps[tokens[j].start])) ++j;
            i = j;
        }
    }

    if (cfg.numbers) {
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            bool all_digits = true;
            for (std::size_t k = 0; k < tokens[i].length; ++k)
                if (!unicode::is_ascii_digit(cps[tokens[i].start + k])) {
                    all_digits = false;
                    break;
                }
            if (all_digits) push(span_text(i, 1));
        }
    }

    if (cfg.random_ngrams && out.size() < cfg.per_paragraph) {
        Rng rng(mix_seed(cfg.seed, detail::kCandidateSalt));
        const std::size_t attempts = 8 + 4 * cfg.per_paragraph;
        for (std::size_t a = 0; a < attempts && out.size() < cfg.per_paragraph; ++a) {
            const std::size_t len =
                1 + rng.below(std::min<std::uint64_t>(cfg.max_span_tokens, tokens.size()));
            const std::size_t start = rng.below(tokens.size() - len + 1);
            push(span_text(start, len));
        }
    }

    return out;
}

enum class SynthMode { synth, synth_trans };

inline std::string to_string(SynthMode m) { return m == SynthMode::synth ? "synth" : "synth_trans"; }

using TextModel = std::function<std::string(const std::string&)>;
using LangGuesser = std::function<std::optional<LanguageCode>(const std::string&)>;

struct GenerateConfig {
    CandidateConfig candidates;
    prompts::SpecialTokens tokens;      // control tokens for synth_trans
    prompts::LangTokenMode token_mode = prompts::LangTokenMode::special_token;
    std::string model_id = "unknown";   // recorded in provenance
    std::string dataset_name = "synthetic";
    LangGuesser lang_guesser;           // synth mode only; optional
    std::function<bool(const QAExample&)> keep_filter;  // optional, defaults off
};

struct ItemFailure {
    std::string id;
    std::string message;
};

struct SyntheticStats {
    std::size_t attempted = 0;
    std::size_t generated = 0;
    std::size_t dropped_empty = 0;
    std::size_t filtered = 0;
    std::vector<ItemFailure> failures;
};

struct SyntheticResult {
    Dataset dataset;
    SyntheticStats stats;
};

// Runs the QG model over every (paragraph, candidate[, target language])
// item. Per-item model failures are recorded and generation continues; only
// a total wipeout is an error. Output order is canonical in (article id,
// paragraph index, candidate index, target language) regardless of input
// article order, and candidate randomness is keyed per paragraph, so results
// are reproducible for a fixed model, article set, and seed.
inline SyntheticResult generate_synthetic(const TextModel& model,
                                          const std::vector<Article>& articles,
                                          const std::vector<LanguageCode>& target_langs,
                                          SynthMode mode, const GenerateConfig& cfg) {
    if (!model) throw ValidationError("generate_synthetic requires a model");
    if (mode == SynthMode::synth_trans) {
        if (target_langs.empty())
            throw ValidationError("synth_trans requires at least one target language");
        for (LanguageCode lc : target_langs)
            prompts::control_token_for(lc, cfg.tokens, cfg.token_mode);  // throws if missing
    }

    std::string heuristics;
    for (const auto& [on, name] :
         {std::pair{cfg.candidates.capitalized_spans, "capitalized_spans"},
          std::pair{cfg.candidates.numbers, "numbers"},
          std::pair{cfg.candidates.random_ngrams, "random_ngrams"}}) {
        if (!on) continue;
        if (!heuristics.empty()) heuristics += ",";
        heuristics += name;
    }

    SyntheticResult result;
    result.dataset.name = cfg.dataset_name;
    result.dataset.source_kind = SourceKind::synthetic;

    struct Item {
        std::string article_id;
        std::size_t pidx, cidx;
        std::string target;  // empty in synth mode
        QAExample example;
    };
    std::vector<Item> items;

    for (const Article& article : articles) {
        for (std::size_t pidx = 0; pidx < article.paragraphs.size(); ++pidx) {
            const std::string& paragraph = article.paragraphs[pidx];
            if (paragraph.empty()) continue;
            CandidateConfig ccfg = cfg.candidates;
            ccfg.seed = mix_seed(cfg.candidates.seed, detail::fnv1a(article.id), pidx);
            const std::vector<AnswerSpan> candidates =
                extract_answer_candidates(paragraph, article.language, ccfg);

            for (std::size_t cidx = 0; cidx < candidates.size(); ++cidx) {
                const AnswerSpan& cand = candidates[cidx];
                const std::string base_id = "synth-" + article.id + "-p" + std::to_string(pidx) +
                                            "-c" + std::to_string(cidx);

                // fixed_lang set: synth_trans, question language is the
                // requested target. Otherwise the emitted question's language
                // is guessed (when a guesser exists) or falls back to the
                // context language, with the choice recorded in provenance.
                auto run_one = [&](const std::string& id, const std::string& source,
                                   std::optional<LanguageCode> fixed_lang,
                                   const std::string& target_tag) {
                    result.stats.attempted += 1;
                    std::string question;
                    try {
                        question = model(source);
                    } catch (const std::exception& e) {
                        result.stats.failures.push_back({id, e.what()});
                        return;
                    }
                    if (question.empty()) {
                        result.stats.dropped_empty += 1;
                        return;
                    }

                    QAExample ex;
                    ex.id = id;
                    ex.context = paragraph;
                    ex.question = question;
                    ex.answers = {cand};
                    ex.context_lang = article.language;
                    if (fixed_lang) {
                        ex.question_lang = *fixed_lang;
                    } else {
                        ex.question_lang = article.language;
                        ex.provenance["question_lang_source"] = "context";
                        if (cfg.lang_guesser) {
                            if (auto g = cfg.lang_guesser(question)) {
                                ex.question_lang = *g;
                                ex.provenance["question_lang_source"] = "guessed";
                            }
                        }
                    }
                    ex.provenance["mode"] = to_string(mode);
                    ex.provenance["model"] = cfg.model_id;
                    ex.provenance["heuristics"] = heuristics;
                    ex.provenance["seed"] = std::to_string(cfg.candidates.seed);

                    if (cfg.keep_filter && !cfg.keep_filter(ex)) {
                        result.stats.filtered += 1;
                        return;
                    }
                    result.stats.generated += 1;
                    items.push_back({article.id, pidx, cidx, target_tag, std::move(ex)});
                };

                if (mode == SynthMode::synth) {
                    run_one(base_id, prompts::qg_source(cand.text, paragraph, cfg.tokens),
                            std::nullopt, "");
                } else {
                    for (LanguageCode tl : target_langs)
                        run_one(base_id + "-" + tl.str(),
                                prompts::qg_controlled_source(cand.text, paragraph, tl,
                                                              cfg.tokens, cfg.token_mode),
                                tl, tl.str());
                }
            }
        }
    }

    if (result.stats.attempted > 0 && result.stats.generated == 0 &&
        result.stats.failures.size() == result.stats.attempted)
        throw Error("synthetic generation failed for all " +
                    std::to_string(result.stats.attempted) + " items; first failure: " +
                    result.stats.failures.front().message);

    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        return std::tie(a.article_id, a.pidx, a.cidx, a.target) <
               std::tie(b.article_id, b.pidx, b.cidx, b.target);
    });
    for (Item& it : items) result.dataset.examples.push_back(std::move(it.example));
    corpus::require_valid(result.dataset);
    return result;
}

// Seeded sub-dataset chains for the training-size curves. Both strategies
// return sub-datasets in pool order, nested across sizes; the final size, if
// it equals |pool|, is the pool itself for either strategy.
inline std::vector<std::pair<std::size_t, Dataset>> sample_for_curve(
    const Dataset& pool, const SamplingStrategy& strategy) {
    strategy.validate();
    if (!strategy.sizes.empty() && strategy.sizes.back() > pool.examples.size())
        throw ValidationError("requested sample size " + std::to_string(strategy.sizes.back()) +
                              " exceeds the pool size " + std::to_string(pool.examples.size()));

    const std::size_t n = pool.examples.size();
    // selected_at[i] = smallest step index that includes pool example i.
    std::vector<std::size_t> member_rank(n, std::numeric_limits<std::size_t>::max());

    if (strategy.variant == SamplingVariant::all_languages) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng rng(mix_seed(strategy.seed, detail::kCurveSalt));
        rng.shuffle(perm);
        for (std::size_t r = 0; r < n; ++r) member_rank[perm[r]] = r;
        // member_rank < size  <=>  selected at that size.
        std::vector<std::pair<std::size_t, Dataset>> out;
        for (std::size_t size : strategy.sizes) {
            Dataset d;
            d.name = pool.name + "-all_languages-" + std::to_string(size);
            d.source_kind = pool.source_kind;
            for (std::size_t i = 0; i < n; ++i)
                if (member_rank[i] < size) d.examples.push_back(pool.examples[i]);
            out.emplace_back(size, std::move(d));
        }
        return out;
    }

    // incremental_languages: per-language seeded queues; each step admits one
    // more language from `order` and fills the quota from the newest allowed
    // language first, then earlier ones.
    std::map<LanguageCode, std::vector<std::size_t>> queues;
    for (std::size_t i = 0; i < n; ++i)
        queues[pool.examples[i].context_lang].push_back(i);
    for (auto& [lc, q] : queues) {
        Rng rng(mix_seed(strategy.seed, detail::kCurveSalt, detail::fnv1a(lc.str())));
        rng.shuffle(q);
    }
    std::map<LanguageCode, std::size_t> cursor;

    std::vector<std::pair<std::size_t, Dataset>> out;
    std::vector<char> selected(n, 0);
    std::size_t selected_count = 0;
    for (std::size_t step = 0; step < strategy.sizes.size(); ++step) {
        const std::size_t size = strategy.sizes[step];
        const std::size_t allowed =
            std::min<std::size_t>(step + 1, strategy.order.size());
        std::size_t need = size - selected_count;
        // Newest admitted language first, then fall back to earlier ones.
        for (std::size_t oi = allowed; oi-- > 0 && need > 0;) {
            const LanguageCode lc = strategy.order[oi];
            auto it = queues.find(lc);
            if (it == queues.end()) continue;
            std::size_t& cur = cursor[lc];
            while (cur < it->second.size() && need > 0) {
                selected[it->second[cur]] = 1;
                ++cur;
                --need;
            }
        }
        if (need > 0)
            throw ValidationError(
                "sample size " + std::to_string(size) + " exceeds the examples available in the " +
                std::to_string(allowed) + " admitted language(s)");
        selected_count = size;

        Dataset d;
        d.name = pool.name + "-incremental_languages-" + std::to_string(size);
        d.source_kind = pool.source_kind;
        for (std::size_t i = 0; i < n; ++i)
            if (selected[i]) d.examples.push_back(pool.examples[i]);
        out.emplace_back(size, std::move(d));
    }
    return out;
}

}  // namespace xlaug::augment
