#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "xlaug/augment.hpp"
#include "xlaug/unicode.hpp"

using namespace xlaug;
using augment::CandidateConfig;
using augment::GenerateConfig;
using augment::SamplingStrategy;
using augment::SamplingVariant;
using augment::SynthMode;

namespace {

// Every candidate must reproduce its text at its stated scalar offset.
void require_offsets_exact(const std::string& paragraph, const std::vector<AnswerSpan>& spans) {
    for (const AnswerSpan& s : spans) {
        REQUIRE_FALSE(s.text.empty());
        REQUIRE(unicode::substr_scalars(paragraph, s.start, unicode::scalar_length(s.text)) ==
                s.text);
    }
}

std::vector<std::string> texts_of(const std::vector<AnswerSpan>& spans) {
    std::vector<std::string> out;
    for (const auto& s : spans) out.push_back(s.text);
    return out;
}

Article make_article(std::string id, LanguageCode lc, std::vector<std::string> paragraphs) {
    Article a;
    a.id = std::move(id);
    a.language = lc;
    a.title = "title-" + a.id;
    a.paragraphs = std::move(paragraphs);
    return a;
}

Dataset make_pool(const std::vector<std::pair<std::string, std::size_t>>& per_language) {
    Dataset pool;
    pool.name = "pool";
    pool.source_kind = SourceKind::synthetic;
    for (const auto& [lc, count] : per_language) {
        for (std::size_t i = 0; i < count; ++i) {
            QAExample ex;
            ex.id = lc + "-" + std::to_string(i);
            ex.context = "Alpha beta " + std::to_string(i);
            ex.question = "which " + std::to_string(i);
            ex.answers = {{"Alpha", 0}};
            ex.context_lang = lang(lc);
            ex.question_lang = lang(lc);
            pool.examples.push_back(std::move(ex));
        }
    }
    return pool;
}

std::set<std::string> id_set(const Dataset& d) {
    std::set<std::string> out;
    for (const auto& ex : d.examples) out.insert(ex.id);
    return out;
}

}  // namespace

TEST_CASE("candidate extraction finds names and numbers") {
    const std::string para = "John Elway led the Broncos in 1998.";
    CandidateConfig cfg;
    auto spans = augment::extract_answer_candidates(para, lang("en"), cfg);

    require_offsets_exact(para, spans);
    REQUIRE(spans.size() <= cfg.per_paragraph);
    const auto texts = texts_of(spans);
    REQUIRE(std::find(texts.begin(), texts.end(), "John Elway") != texts.end());
    REQUIRE(std::find(texts.begin(), texts.end(), "1998") != texts.end());

    SECTION("capitalized spans outrank numbers and randoms") {
        cfg.per_paragraph = 1;
        auto first = augment::extract_answer_candidates(para, lang("en"), cfg);
        REQUIRE(first.size() == 1);
        REQUIRE(first[0].text == "John Elway");
        REQUIRE(first[0].start == 0);
    }

    SECTION("trailing punctuation is trimmed off tokens") {
        for (const auto& s : spans) {
            REQUIRE(s.text.find('.') == std::string::npos);
        }
    }
}

TEST_CASE("candidate extraction edge cases") {
    CandidateConfig cfg;

    SECTION("empty paragraph is rejected") {
        REQUIRE_THROWS_AS(augment::extract_answer_candidates("", lang("en"), cfg),
                          ValidationError);
    }
    SECTION("k = 0 yields nothing") {
        cfg.per_paragraph = 0;
        REQUIRE(augment::extract_answer_candidates("Some Words Here", lang("en"), cfg).empty());
    }
    SECTION("punctuation-only paragraph yields nothing") {
        REQUIRE(augment::extract_answer_candidates("!! ... ??", lang("en"), cfg).empty());
    }
    SECTION("capitalized runs are capped at max_span_tokens") {
        const std::string para = "Aa Bb Cc Dd Ee Ff Gg ends here";
        cfg.per_paragraph = 10;
        auto spans = augment::extract_answer_candidates(para, lang("en"), cfg);
        require_offsets_exact(para, spans);
        REQUIRE(spans[0].text == "Aa Bb Cc Dd Ee");  // 5 of the 7-token run
    }
    SECTION("duplicate texts are deduplicated") {
        const std::string para = "Paris is far from Paris";
        cfg.per_paragraph = 10;
        cfg.random_ngrams = false;
        auto spans = augment::extract_answer_candidates(para, lang("en"), cfg);
        REQUIRE(texts_of(spans) == std::vector<std::string>{"Paris"});
    }
}

TEST_CASE("caseless scripts fall back to random n-gram spans") {
    const std::string para = "丹佛野马队在超级碗中获胜了吗这是测试";
    CandidateConfig cfg;
    cfg.per_paragraph = 2;
    cfg.seed = 5;
    auto spans = augment::extract_answer_candidates(para, lang("zh"), cfg);

    REQUIRE(spans.size() == 2);
    require_offsets_exact(para, spans);
    for (const auto& s : spans) {
        const std::size_t len = unicode::scalar_length(s.text);
        REQUIRE(len >= 1);
        REQUIRE(len <= cfg.max_span_tokens);
        REQUIRE(para.find(s.text) != std::string::npos);
    }

    // Seeded: same seed, same spans; the stream is per-seed.
    auto again = augment::extract_answer_candidates(para, lang("zh"), cfg);
    REQUIRE(texts_of(again) == texts_of(spans));
}

TEST_CASE("synthetic generation over a toy model") {
    // Two capitalized names per paragraph so candidate counts are exact.
    std::vector<Article> articles = {
        make_article("a1", lang("es"),
                     {"Pablo visito Madrid hace tiempo", "Rosa pinto Sevilla con cuidado"}),
    };
    augment::TextModel model = [](const std::string& source) {
        return "pregunta sobre " + source.substr(0, source.find(' '));
    };
    GenerateConfig cfg;
    cfg.candidates.per_paragraph = 2;
    cfg.candidates.random_ngrams = false;
    cfg.tokens = prompts::make_special_tokens({lang("es"), lang("de")});
    cfg.model_id = "toy-model-1";

    SECTION("synth_trans cardinality, ids, and language stamping") {
        auto result = augment::generate_synthetic(model, articles, {lang("es")},
                                                  SynthMode::synth_trans, cfg);
        REQUIRE(result.dataset.source_kind == SourceKind::synthetic);
        REQUIRE(result.dataset.examples.size() == 4);  // 2 paragraphs x 2 candidates x 1 lang
        REQUIRE(result.stats.generated == 4);
        REQUIRE(result.stats.attempted == 4);

        for (const auto& ex : result.dataset.examples) {
            REQUIRE(ex.question_lang == lang("es"));
            REQUIRE(ex.context_lang == lang("es"));
            REQUIRE(ex.provenance.at("mode") == "synth_trans");
            REQUIRE(ex.provenance.at("model") == "toy-model-1");
            REQUIRE_FALSE(ex.provenance.at("heuristics").empty());
        }
        REQUIRE(result.dataset.examples[0].id == "synth-a1-p0-c0-es");
        REQUIRE(result.dataset.examples[3].id == "synth-a1-p1-c1-es");
    }

    SECTION("two target languages double the output") {
        auto result = augment::generate_synthetic(model, articles, {lang("es"), lang("de")},
                                                  SynthMode::synth_trans, cfg);
        REQUIRE(result.dataset.examples.size() == 8);
    }

    SECTION("unconfigured target language is rejected up front") {
        REQUIRE_THROWS_AS(augment::generate_synthetic(model, articles, {lang("fr")},
                                                      SynthMode::synth_trans, cfg),
                          ValidationError);
    }

    SECTION("synth mode falls back to the context language") {
        auto result =
            augment::generate_synthetic(model, articles, {}, SynthMode::synth, cfg);
        REQUIRE(result.dataset.examples.size() == 4);
        for (const auto& ex : result.dataset.examples) {
            REQUIRE(ex.question_lang == lang("es"));
            REQUIRE(ex.provenance.at("question_lang_source") == "context");
        }
    }

    SECTION("synth mode records a guesser verdict") {
        cfg.lang_guesser = [](const std::string&) { return std::optional<LanguageCode>(lang("en")); };
        auto result =
            augment::generate_synthetic(model, articles, {}, SynthMode::synth, cfg);
        for (const auto& ex : result.dataset.examples) {
            REQUIRE(ex.question_lang == lang("en"));
            REQUIRE(ex.provenance.at("question_lang_source") == "guessed");
        }
    }

    SECTION("keep_filter drops and counts") {
        cfg.keep_filter = [](const QAExample& ex) { return ex.answers[0].text != "Pablo"; };
        auto result = augment::generate_synthetic(model, articles, {lang("es")},
                                                  SynthMode::synth_trans, cfg);
        REQUIRE(result.stats.filtered == 1);
        REQUIRE(result.dataset.examples.size() == 3);
    }
}

TEST_CASE("synthetic generation handles model failures") {
    std::vector<Article> articles = {
        make_article("a1", lang("en"), {"Alice met Bob yesterday", "Carol saw Dave today"}),
    };
    GenerateConfig cfg;
    cfg.candidates.per_paragraph = 2;
    cfg.candidates.random_ngrams = false;
    cfg.tokens = prompts::make_special_tokens({lang("en")});

    SECTION("per-item failures are recorded and generation continues") {
        // Keyed to the answer slot of the prompt, so exactly one item fails.
        augment::TextModel flaky = [](const std::string& source) -> std::string {
            if (source.find("<SEP> Alice <SEP>") != std::string::npos)
                throw Error("model exploded");
            return "what happened";
        };
        auto result =
            augment::generate_synthetic(flaky, articles, {lang("en")}, SynthMode::synth_trans, cfg);
        REQUIRE(result.stats.failures.size() == 1);
        REQUIRE(result.stats.failures[0].id == "synth-a1-p0-c0-en");
        REQUIRE(result.stats.failures[0].message == "model exploded");
        REQUIRE(result.dataset.examples.size() == 3);
    }

    SECTION("empty questions are dropped and counted") {
        augment::TextModel muted = [](const std::string& source) -> std::string {
            return source.find("<SEP> Carol <SEP>") != std::string::npos ? "" : "ok question";
        };
        auto result =
            augment::generate_synthetic(muted, articles, {lang("en")}, SynthMode::synth_trans, cfg);
        REQUIRE(result.stats.dropped_empty == 1);
        REQUIRE(result.dataset.examples.size() == 3);
    }

    SECTION("total failure raises") {
        augment::TextModel dead = [](const std::string&) -> std::string {
            throw Error("down");
        };
        REQUIRE_THROWS_AS(augment::generate_synthetic(dead, articles, {lang("en")},
                                                      SynthMode::synth_trans, cfg),
                          Error);
    }
}

TEST_CASE("synthetic generation is deterministic and order-canonical") {
    std::vector<Article> articles = {
        make_article("b2", lang("de"), {"Anna Berlin besuchte 1990 dort"}),
        make_article("a1", lang("de"), {"Karl Hamburg verliess 1985 schnell"}),
    };
    augment::TextModel model = [](const std::string& source) {
        return "welche frage " + std::to_string(source.size());
    };
    GenerateConfig cfg;
    cfg.tokens = prompts::make_special_tokens({lang("de")});
    cfg.candidates.seed = 11;

    auto r1 = augment::generate_synthetic(model, articles, {lang("de")}, SynthMode::synth_trans, cfg);
    auto r2 = augment::generate_synthetic(model, articles, {lang("de")}, SynthMode::synth_trans, cfg);
    REQUIRE(r1.dataset == r2.dataset);

    // Reversing input article order must not change the output at all:
    // ordering is canonical and candidate seeds are keyed per paragraph.
    std::vector<Article> reversed = {articles[1], articles[0]};
    auto r3 =
        augment::generate_synthetic(model, reversed, {lang("de")}, SynthMode::synth_trans, cfg);
    REQUIRE(r1.dataset == r3.dataset);

    // Canonical order sorts by article id.
    REQUIRE(r1.dataset.examples.front().id.find("synth-a1-") == 0);

    // Every synthetic example satisfies the corpus invariants.
    REQUIRE_NOTHROW(corpus::require_valid(r1.dataset));
}

TEST_CASE("curve sampling: all_languages nesting and exhaustion") {
    Dataset pool = make_pool({{"es", 30}, {"de", 20}, {"hi", 10}});
    SamplingStrategy strat;
    strat.variant = SamplingVariant::all_languages;
    strat.sizes = {0, 4, 8, 20, 60};
    strat.seed = 3;

    auto chain = augment::sample_for_curve(pool, strat);
    REQUIRE(chain.size() == 5);
    for (std::size_t i = 0; i < chain.size(); ++i) {
        REQUIRE(chain[i].first == strat.sizes[i]);
        REQUIRE(chain[i].second.examples.size() == strat.sizes[i]);
        REQUIRE(chain[i].second.source_kind == pool.source_kind);
    }
    // Nesting: each sub-dataset's ids are contained in the next one's.
    for (std::size_t i = 1; i < chain.size(); ++i) {
        const auto prev = id_set(chain[i - 1].second);
        const auto next = id_set(chain[i].second);
        REQUIRE(std::includes(next.begin(), next.end(), prev.begin(), prev.end()));
    }
    // Exhaustion: the final sample is the pool itself, in pool order.
    REQUIRE(chain.back().second.examples == pool.examples);

    SECTION("seeded reproducibility and seed sensitivity") {
        auto again = augment::sample_for_curve(pool, strat);
        REQUIRE(again[2].second.examples == chain[2].second.examples);
        SamplingStrategy other = strat;
        other.seed = 4;
        auto different = augment::sample_for_curve(pool, other);
        REQUIRE(different[2].second.examples != chain[2].second.examples);
    }

    SECTION("pool order is preserved inside each sub-dataset") {
        std::vector<std::size_t> positions;
        for (const auto& ex : chain[3].second.examples) {
            const auto it = std::find_if(pool.examples.begin(), pool.examples.end(),
                                         [&](const QAExample& p) { return p.id == ex.id; });
            positions.push_back(static_cast<std::size_t>(it - pool.examples.begin()));
        }
        REQUIRE(std::is_sorted(positions.begin(), positions.end()));
    }
}

TEST_CASE("curve sampling: incremental language admission") {
    Dataset pool = make_pool({{"es", 30}, {"de", 20}, {"hi", 10}});
    SamplingStrategy strat;
    strat.variant = SamplingVariant::incremental_languages;
    strat.order = {lang("es"), lang("de"), lang("hi")};
    strat.sizes = {10, 30, 60};
    strat.seed = 7;

    auto chain = augment::sample_for_curve(pool, strat);
    REQUIRE(chain.size() == 3);

    // Step 1: Spanish only.
    for (const auto& ex : chain[0].second.examples) REQUIRE(ex.context_lang == lang("es"));
    REQUIRE(chain[0].second.examples.size() == 10);

    // Step 2: the newest language is drawn first, so all 20 German examples
    // join the 10 already-selected Spanish ones.
    std::size_t es = 0, de = 0;
    for (const auto& ex : chain[1].second.examples) {
        if (ex.context_lang == lang("es")) ++es;
        if (ex.context_lang == lang("de")) ++de;
        REQUIRE(ex.context_lang != lang("hi"));
    }
    REQUIRE(es == 10);
    REQUIRE(de == 20);

    // Step 3: exhaustion equals the pool exactly.
    REQUIRE(chain[2].second.examples == pool.examples);

    // Nesting holds here too.
    const auto s1 = id_set(chain[0].second);
    const auto s2 = id_set(chain[1].second);
    REQUIRE(std::includes(s2.begin(), s2.end(), s1.begin(), s1.end()));

    SECTION("both strategies agree on the final point") {
        SamplingStrategy all = strat;
        all.variant = SamplingVariant::all_languages;
        auto all_chain = augment::sample_for_curve(pool, all);
        REQUIRE(all_chain.back().second.examples == chain.back().second.examples);
    }
}

TEST_CASE("curve sampling restriction property across random strategies") {
    Dataset pool = make_pool({{"es", 12}, {"de", 9}, {"hi", 7}, {"ar", 5}});
    const std::vector<LanguageCode> order = {lang("es"), lang("de"), lang("hi"), lang("ar")};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(mix_seed(seed, 77));
        SamplingStrategy strat;
        strat.variant = SamplingVariant::incremental_languages;
        strat.order = order;
        strat.seed = seed;
        // Random strictly-ascending size chain ending at most at |pool|.
        std::size_t size = 1 + rng.below(4);
        while (strat.sizes.size() < 4 && size <= pool.examples.size()) {
            // Admitted languages at this step bound what is available.
            const std::size_t step = strat.sizes.size();
            std::size_t avail = 0;
            const std::size_t counts[4] = {12, 9, 7, 5};
            for (std::size_t i = 0; i <= std::min<std::size_t>(step, 3); ++i) avail += counts[i];
            if (size > avail) break;
            strat.sizes.push_back(size);
            size += 1 + rng.below(10);
        }
        if (strat.sizes.empty()) continue;

        auto chain = augment::sample_for_curve(pool, strat);
        for (std::size_t i = 0; i < chain.size(); ++i) {
            const std::size_t admitted = std::min(i + 1, order.size());
            for (const auto& ex : chain[i].second.examples) {
                const auto pos = std::find(order.begin(), order.end(), ex.context_lang);
                REQUIRE(static_cast<std::size_t>(pos - order.begin()) < admitted);
            }
            if (i > 0) {
                const auto prev = id_set(chain[i - 1].second);
                const auto cur = id_set(chain[i].second);
                REQUIRE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
            }
        }
    }
}

TEST_CASE("curve sampling validation") {
    Dataset pool = make_pool({{"es", 5}, {"de", 5}});
    SamplingStrategy strat;

    SECTION("sizes must ascend strictly") {
        strat.sizes = {4, 4};
        REQUIRE_THROWS_AS(augment::sample_for_curve(pool, strat), ValidationError);
    }
    SECTION("sizes cannot exceed the pool") {
        strat.sizes = {11};
        REQUIRE_THROWS_AS(augment::sample_for_curve(pool, strat), ValidationError);
    }
    SECTION("incremental requires an order") {
        strat.variant = SamplingVariant::incremental_languages;
        strat.sizes = {2};
        REQUIRE_THROWS_AS(augment::sample_for_curve(pool, strat), ValidationError);
    }
    SECTION("incremental rejects sizes beyond the admitted languages") {
        strat.variant = SamplingVariant::incremental_languages;
        strat.order = {lang("es")};
        strat.sizes = {8};  // only 5 Spanish examples exist
        REQUIRE_THROWS_AS(augment::sample_for_curve(pool, strat), ValidationError);
    }
    SECTION("default incremental order starts with the four named languages") {
        const auto order = augment::default_incremental_order();
        REQUIRE(order.size() >= 4);
        REQUIRE(order[0] == lang("es"));
        REQUIRE(order[1] == lang("de"));
        REQUIRE(order[2] == lang("hi"));
        REQUIRE(order[3] == lang("ar"));
        REQUIRE(std::find(order.begin(), order.end(), lang("en")) == order.end());
    }
}
